"""Imitation training: oracle labels, loss and the training loop."""
