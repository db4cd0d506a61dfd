"""Recovery maps, k-extensions, entanglement measures and entropy-inequality search."""
from qrecover.kernels import BACKEND
from qrecover.linalg import SubsystemLayout
from qrecover.states import MultipartiteState

__version__ = "0.1.0"

__all__ = ["BACKEND", "MultipartiteState", "SubsystemLayout", "__version__"]
