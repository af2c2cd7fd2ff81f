"""h-Randers conformal change ``Lbar = e^sigma L + beta`` of Finsler metrics.

Closed-form tensors of the changed space are compared with a jet-based
oracle that differentiates ``Lbar`` directly.
"""
from .finsler import analyze
from .geodesics import GeodesicTrajectory, integrate, reparam_check
from .hrc import ChangePack, verify_closed_forms
from .jets import TangentPoint
from .metricspec import MetricSpec, from_dict, load, validate

__version__ = "0.1.0"

__all__ = [
    "ChangePack",
    "GeodesicTrajectory",
    "MetricSpec",
    "TangentPoint",
    "analyze",
    "from_dict",
    "integrate",
    "load",
    "reparam_check",
    "validate",
    "verify_closed_forms",
]
