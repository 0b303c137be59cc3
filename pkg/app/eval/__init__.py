"""Trial harness, navigation metrics, generalization sweeps and top-view rendering."""
