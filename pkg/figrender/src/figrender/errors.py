"""Rendering error types."""


class FigRenderError(Exception):
    """Base class for rendering errors."""


class SchemaError(FigRenderError, ValueError):
    """A referenced CSV is missing required columns.

    ``missing`` maps each offending file to the column names it lacks.
    """

    def __init__(self, missing: dict[str, list[str]]):
        self.missing = dict(missing)
        parts = [f"{path}: missing columns {', '.join(cols)}" for path, cols in missing.items()]
        super().__init__("; ".join(parts))


class EmptyInputError(FigRenderError, ValueError):
    """A referenced CSV has a header but no data rows."""
