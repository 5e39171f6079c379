"""Exception hierarchy shared by all modules."""


class GroundSynthError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(GroundSynthError):
    pass


class VocabularyError(GroundSynthError):
    pass


class EmptyVocabulary(VocabularyError):
    pass


class SceneError(GroundSynthError):
    """Raised when a scene file fails validation."""


class SchemaError(SceneError):
    pass


class UnknownCategory(SceneError):
    pass


class UnknownAttribute(SceneError):
    pass


class DegenerateBox(SceneError):
    pass


class BoxOutOfBounds(SceneError):
    pass


class DuplicateObjectId(SceneError):
    pass


class UnknownObject(GroundSynthError, KeyError):
    pass


class UnshiftableBox(GroundSynthError):
    pass


class MissingSlot(GroundSynthError):
    pass


class Unparseable(GroundSynthError):
    pass


class NoCandidate(GroundSynthError):
    pass


class AdapterError(GroundSynthError):
    pass


class AdapterTimeout(AdapterError):
    pass


class MalformedResponse(AdapterError):
    pass


class TimeStepError(GroundSynthError):
    pass


class EmptySample(GroundSynthError, ValueError):
    pass
