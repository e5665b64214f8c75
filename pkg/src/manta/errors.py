"""Exception hierarchy shared across the engine."""


class MantaError(Exception):
    """Base class for all engine errors."""


# --- concept parsing ---------------------------------------------------------

class MalformedDecomposition(MantaError):
    """LLM decomposition output could not be turned into a valid concept map."""


# --- provider / gateway ------------------------------------------------------

class ProviderError(MantaError):
    """Chat/embedding provider failed after retries."""


class BudgetExceeded(MantaError):
    """A call would push the token ledger past its budget."""


class DimensionMismatch(MantaError):
    """Vectors of incompatible dimensions were combined."""


class UnparseableVerdict(MantaError):
    """Judge response did not contain a winner token."""


class EmptyEnhancement(MantaError):
    """Detail enhancement produced zero parseable fragments."""


# --- vector index ------------------------------------------------------------

class NonFiniteInput(MantaError):
    """Vector contains NaN or infinity."""


class EmptyCollection(MantaError):
    """Search issued against a collection with no records."""


class DuplicateId(MantaError):
    """Two records share an id within one collection."""


class CorruptSnapshot(MantaError):
    """Snapshot file is truncated or fails structural validation."""


class VersionMismatch(MantaError):
    """Snapshot was written by an unsupported format version."""


# --- retrieval gating --------------------------------------------------------

class NoCheckpointAvailable(MantaError):
    """No checkpoint survives guardrail filtering."""


# --- generation backend ------------------------------------------------------

class BackendUnavailable(MantaError):
    """Image generation backend could not be reached."""


class ModelNotFound(MantaError):
    """Backend does not know the requested checkpoint id."""


# --- ingestion ---------------------------------------------------------------

class UnreadableFile(MantaError):
    """Dataset file missing or unreadable."""


class SchemaError(MantaError):
    """Dataset top-level shape is wrong."""


class MissingMetadata(MantaError):
    """Metadata-baseline ingestion requires descriptions the records lack."""


# --- evaluation --------------------------------------------------------------

class NoVerdicts(MantaError):
    """Win rate requested for a criterion with no verdicts."""


# --- pipeline / run store ----------------------------------------------------

class UnknownRun(MantaError):
    """Referenced run id does not exist in the store."""


class UnknownImage(MantaError):
    """Referenced image index does not exist in the run."""
