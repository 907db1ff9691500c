"""Exception hierarchy shared by every submodule."""


class NightforgeError(Exception):
    pass


class InvalidDims(NightforgeError, ValueError):
    pass


class DimMismatch(NightforgeError, ValueError):
    pass


class InvalidConfig(NightforgeError, ValueError):
    pass


class EmptyCatalog(NightforgeError):
    pass


class DecodeError(NightforgeError):
    def __init__(self, path, reason=""):
        self.path = str(path)
        msg = f"cannot decode {self.path}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class DepthOutOfRange(NightforgeError, ValueError):
    pass


class NegativeSignal(NightforgeError, ValueError):
    pass


class WrongChannelCount(NightforgeError, ValueError):
    pass


class TapeMismatch(NightforgeError, ValueError):
    pass


class EmptyMask(NightforgeError, ValueError):
    pass


class ZeroMedian(NightforgeError, ValueError):
    pass


class EmptyList(NightforgeError, ValueError):
    pass


class InvalidManifest(NightforgeError):
    pass
