"""Minimal neural activation pattern (NAP) specifications for ReLU networks."""
from importlib import resources

from .nap import Nap, class_nap, coarsest, subsumes
from .network import Dataset, InputDomain, Network, load_dataset, load_model
from .verifier import RobustnessQuery, Verdict, verify

__version__ = "0.1.0"


def fixture_path(name: str) -> str:
    """Path of a bundled fixture file, e.g. ``fixture_path("fixture_2x2.json")``."""
    return str(resources.files(__package__) / "fixtures" / name)


__all__ = [
    "Dataset", "InputDomain", "Nap", "Network", "RobustnessQuery", "Verdict",
    "class_nap", "coarsest", "fixture_path", "load_dataset", "load_model", "subsumes", "verify",
]
