"""Roughness Calibrator - pipe roughness identification for water networks.

Newton and Tensor (second-order) search directions, multi-start campaigns,
the degenerate-conic analysis of the quadratic model, and a steady-state
forward solver for synthetic measurements.
"""

__version__ = "1.0.0"
__component_name__ = "roughness-calibrator"
