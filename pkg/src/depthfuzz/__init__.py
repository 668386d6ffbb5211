"""Grey-box fuzzing with field-selective mutation and a call-depth power schedule."""

from .codec import FieldSpec, LayoutSpec, Mode, MutationView, extract, parse_spec, restore
from .scheduler import EnergyConfig, Schedule, depth_energy, validity

__version__ = "0.1.0"
