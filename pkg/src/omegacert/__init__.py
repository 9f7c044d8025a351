"""Certified bounds on omega-regular properties of probabilistic programs."""

from .compile import compile_to_pts
from .dra import parse_dra, print_dra
from .ppl import parse_program
from .product import FOV, IOV, ProductSystem
from .solver import synthesize, synthesize_best
from .verify import BoundInterval, VerificationTask, compute_tpd, conjoin_dras, verify_property

__version__ = "0.1.0"

__all__ = [
    "FOV", "IOV", "BoundInterval", "ProductSystem", "VerificationTask",
    "compile_to_pts", "compute_tpd", "conjoin_dras", "parse_dra", "parse_program", "print_dra",
    "synthesize", "synthesize_best", "verify_property",
]
