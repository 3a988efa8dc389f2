"""Exception hierarchy. Each family carries the CLI exit code it maps to."""


class EFleshError(Exception):
    exit_code = 1

    def __init__(self, message="", *, stage=None, parameter=None):
        super().__init__(message)
        self.stage = stage
        self.parameter = parameter

    def __str__(self):
        msg = super().__str__()
        parts = []
        if self.stage:
            parts.append(f"[stage {self.stage}]")
        parts.append(getattr(self, "label", type(self).__name__) + (f": {msg}" if msg else ""))
        if self.parameter and self.parameter not in msg:
            parts.append(f"(parameter: {self.parameter})")
        return " ".join(parts)


class ConfigError(EFleshError, ValueError):
    exit_code = 1


# I/O and parsing: exit 2
class MeshIOError(EFleshError):
    exit_code = 2


class UnreadableFile(MeshIOError):
    pass


class MalformedHeader(MeshIOError):
    pass


class TruncatedBody(MalformedHeader):
    # the declared triangle count disagrees with the bytes on disk
    label = "MalformedHeader (truncated body)"


class EmptyMesh(MeshIOError):
    pass


class IoFailure(MeshIOError):
    pass


class UnrepresentableCount(MeshIOError):
    pass


# geometry: exit 3
class GeometryError(EFleshError):
    exit_code = 3


class DegenerateInput(GeometryError):
    pass


class OutOfRange(GeometryError):
    pass


class BoxTooSmall(GeometryError):
    pass


class EmptyResult(GeometryError):
    pass


# fabrication: exit 4
class FabricationError(EFleshError):
    exit_code = 4


class PouchOverlap(FabricationError):
    pass


class PouchOutsideBody(FabricationError):
    pass


class PouchTooTallForLayer(FabricationError):
    pass


class SlotIntersectsPouch(FabricationError):
    pass


class SlotOutsideBody(FabricationError):
    pass


class MultiplePauseLevels(FabricationError):
    def __init__(self, message="", *, pause_layers=(), **kw):
        super().__init__(message, **kw)
        self.pause_layers = list(pause_layers)


# simulation / sensing: exit 5
class SimulationError(EFleshError):
    exit_code = 5


class SingularPoint(SimulationError):
    pass


class PointInsideMagnet(SimulationError):
    pass


class PlaneIntersectsMagnet(SimulationError):
    pass


class MagnetBelowBoard(SimulationError):
    pass


class Undetectable(SimulationError):
    pass


class WindowTooShort(SimulationError):
    pass


class SingleClassDataset(SimulationError):
    pass
