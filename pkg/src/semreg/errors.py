"""Exception types raised across the registration stages."""


class RegistrationError(RuntimeError):
    """Base class for failures inside the registration pipeline.

    ``stage`` names the pipeline step that raised, so callers (and the CLI)
    can report it without parsing messages.
    """

    stage = "pipeline"

    def __init__(self, message: str, stage: str | None = None):
        if stage is not None:
            self.stage = stage
        super().__init__(message)

    def __str__(self) -> str:
        return f"[{self.stage}] {super().__str__()}"


class NoCorrespondencesError(RegistrationError):
    stage = "correspondence"


class CliqueTooSmallError(RegistrationError):
    stage = "max_clique"


class DegenerateSolutionError(RegistrationError):
    stage = "pose_solver"


class ScanFormatError(ValueError):
    """Malformed scan, label or pose file."""
