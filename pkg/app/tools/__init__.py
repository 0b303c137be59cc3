"""Artifact storage for runs: worlds, demonstrations, checkpoints and CSVs."""
