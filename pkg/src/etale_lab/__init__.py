"""Finite étale structures, their isomorphism groupoids, and the constructions
that pass between definable sets and groupoid actions."""

from .etale import EtaleStructure, from_fibers
from .finspace import EtaleSpace, FinSpace
from .finstruct import FinStructure
from .isogpd import IsoGroupoid, SaturationReport, certify_sigma1_saturations, compute_iso_groupoid
from .logic import Signature, parse_formula, to_text

__all__ = [
    "EtaleSpace",
    "EtaleStructure",
    "FinSpace",
    "FinStructure",
    "IsoGroupoid",
    "SaturationReport",
    "Signature",
    "certify_sigma1_saturations",
    "compute_iso_groupoid",
    "from_fibers",
    "parse_formula",
    "to_text",
]
