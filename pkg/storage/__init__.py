"""
Storage package for datasets and model artifacts.
"""
from .dataset_store import Dataset, load_dataset, save_dataset

__all__ = ["Dataset", "load_dataset", "save_dataset"]
