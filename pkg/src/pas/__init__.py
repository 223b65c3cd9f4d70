"""Differentiable pooling-architecture search for graph classification."""
__version__ = "0.1.0"

from .graphdata import Dataset, Graph, load_tu_dataset
from .search import SearchConfig, cross_validate, pas_search, random_search, train_architecture
from .supernet import DerivedArch

__all__ = [
    "Dataset",
    "DerivedArch",
    "Graph",
    "SearchConfig",
    "cross_validate",
    "load_tu_dataset",
    "pas_search",
    "random_search",
    "train_architecture",
]
