"""Perspective pose toolkit for fine-grained objects.

Submodules:
    camera    seven-parameter camera model, rotations, projections
    mesh      triangle mesh loading, normalization, surface sampling
    field     location-field rasterization, IO, synthetic corpus generation
    metrics   rotation / reprojection error metrics and aggregation
    solver    pose recovery from location fields (DLT + damped least squares)
    dataset   annotation records, manifests, splits, statistics
    service   HTTP API backing the annotation UI
    cli       command-line entry points
"""

__version__ = "0.1.0"
