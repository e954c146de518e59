from .render import (
    CURVE_COLUMNS,
    KINDS,
    SUMMARY_COLUMNS,
    PlotInputError,
    PlotSpec,
    render,
    sidecar_path,
)

__version__ = "0.1.0"
