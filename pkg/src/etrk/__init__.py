"""Event-camera multi-object tracking: frame aggregation, region proposals,
an overlap tracker with occlusion handling, an EBMS baseline, fixed-point
emulation, spike export and evaluation."""

__version__ = "0.1.0"
