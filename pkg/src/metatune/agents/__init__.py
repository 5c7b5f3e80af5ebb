"""Tunable learners and the meta-episode runner."""
