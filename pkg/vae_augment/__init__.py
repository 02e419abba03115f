"""VAE-based self-augmentation for small tabular device datasets."""

__all__ = [
    "augment",
    "config",
    "evaluation",
    "load_data",
    "numeric_core",
    "pipeline",
    "preprocess",
    "regressor",
    "seeds",
    "synth",
    "vae",
]
