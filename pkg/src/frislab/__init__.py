"""Fluid reconfigurable surface receive spatial modulation: link-level simulation and analysis."""
from .channel import FrisGeometry, build_correlation, sample_channels
from .fris import PhaseMode, configure_mode, configure_all
from .modem import FrameConfig, make_constellation
from .analysis import continuous_stats, quantized_stats, union_bound_ber
from .harness import SweepSpec, run_sweep, run_family, parse_config, preset_spec, write_csv, read_csv
from .presets import list_presets

__version__ = "0.1.0"
