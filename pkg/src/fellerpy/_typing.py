from __future__ import annotations
from fractions import Fraction
from typing import Callable, Sequence, Tuple, Union

import numpy as np
from typing_extensions import Literal, TypeAlias

Matrix: TypeAlias = Union[np.ndarray, Sequence[Sequence[float]]]
Vector: TypeAlias = Union[np.ndarray, Sequence[float]]
Rational: TypeAlias = Union[Fraction, int, str]
TimeValue: TypeAlias = Union[float, Fraction]
Phi: TypeAlias = Union[Callable[..., float], np.ndarray]
Jump: TypeAlias = Tuple[float, int]

LogLevel: TypeAlias = Literal['INFO', 'DEBUG', 'WARNING', 'ERROR']
CommandName: TypeAlias = Literal["verify-semigroup", "bounds", "simulate",
                                 "corrupt", "regularize", "audit", "fdd"]
LimitSide: TypeAlias = Literal["left", "right"]
