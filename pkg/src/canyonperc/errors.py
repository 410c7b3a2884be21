"""Exception hierarchy shared by the simulation pipeline and the CLI."""


class CanyonPercError(Exception):
    exit_code = 1


class ParameterError(CanyonPercError, ValueError):
    exit_code = 2


class GeometryError(CanyonPercError):
    exit_code = 3


class DegenerateFitError(CanyonPercError):
    exit_code = 4


class IntegrityError(CanyonPercError):
    exit_code = 6


class SchemaError(CanyonPercError):
    exit_code = 7
