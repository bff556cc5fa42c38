"""Data, training, inference, evaluation and ablation runs."""
