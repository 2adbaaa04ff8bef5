"""Exception hierarchy shared across the package."""


class HeteroSdmError(Exception):
    """Base class for all package-specific errors."""


class DuplicateNameError(HeteroSdmError):
    """A node or edge set with this name is already registered."""


class UnknownNodeSetError(HeteroSdmError):
    """An edge set references a node set that does not exist."""


class IndexOutOfBoundsError(HeteroSdmError):
    """A node index exceeds the size of its node set or segment range."""


class DuplicateEdgeError(HeteroSdmError):
    """The same (sender, receiver) pair appears twice in one edge set."""


class ShapeMismatchError(HeteroSdmError):
    """Array shapes are inconsistent with the declared configuration."""


class NonFiniteLossError(HeteroSdmError):
    """The training loss evaluated to NaN or infinity."""


class MissingEdgeSetError(HeteroSdmError):
    """The model configuration requires an edge set the graph lacks."""


class InfeasibleRequestError(HeteroSdmError):
    """More samples were requested than the candidate pool contains."""


class EmptyInputError(HeteroSdmError):
    """An operation that needs at least one row received none."""


class DegenerateLabelsError(HeteroSdmError):
    """AUC is undefined because only one label class is present."""


class CheckpointError(HeteroSdmError):
    """A checkpoint file is corrupt, truncated, or version-incompatible."""


class IngestError(HeteroSdmError):
    """Base class for region CSV loading failures."""


class MissingColumnError(IngestError):
    """A required CSV column is absent."""


class NonNumericFeatureError(IngestError):
    """An environmental feature column failed to parse as real numbers."""


class UnknownSpeciesError(IngestError):
    """A record references a species id absent from the species table."""


class InconsistentWidthError(IngestError):
    """Environmental feature columns disagree between input files."""


class UnknownGroupError(IngestError):
    """A species group label is outside the declared vocabulary."""


class ManifestError(HeteroSdmError):
    """A run manifest or sweep spec failed validation."""
