"""GNN-based massive MIMO detection with MMSE and belief-propagation baselines."""
