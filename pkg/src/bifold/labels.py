"""Stage and label vocabularies with their fixed class orders."""

from __future__ import annotations

from enum import Enum

from .errors import StageMismatch


class Stage(str, Enum):
    DETECTION = "detection"
    CLASSIFICATION = "classification"

    @property
    def class_names(self) -> tuple[str, ...]:
        return DETECTION_CLASSES if self is Stage.DETECTION else CLASSIFICATION_CLASSES

    @property
    def class_count(self) -> int:
        return len(self.class_names)

    @property
    def prob_columns(self) -> tuple[str, ...]:
        return tuple(f"p_{name}" for name in self.class_names)


class Method(str, Enum):
    SOFT = "soft"
    HARD = "hard"
    UWM = "uwm"
    ESVT = "esvt"
    NWM = "nwm"


# Class index order is fixed: tumor must be 0 and glioma/meningioma/pituitary 0/1/2.
DETECTION_CLASSES: tuple[str, ...] = ("tumor", "notumor")
CLASSIFICATION_CLASSES: tuple[str, ...] = ("glioma", "meningioma", "pituitary")
NOTUMOR = "notumor"
FINAL_LABELS: tuple[str, ...] = (*CLASSIFICATION_CLASSES, NOTUMOR)


def as_stage(value: Stage | str) -> Stage:
    try:
        return Stage(value)
    except ValueError:
        raise StageMismatch(f"unknown stage {value!r}") from None


def as_method(value: Method | str) -> Method:
    try:
        return Method(value)
    except ValueError:
        raise ValueError(f"unknown method {value!r}; expected one of "
                         f"{', '.join(m.value for m in Method)}") from None
