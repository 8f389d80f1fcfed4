from enum import IntEnum


class ClassLabel(IntEnum):
    """Diagnostic class. The integer codes are fixed and used everywhere as array indices."""

    NORMAL = 0
    BENIGN = 1
    MALIGNANT = 2

    @classmethod
    def parse(cls, name: str) -> "ClassLabel":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown class name {name!r}; expected one of {class_names()}") from None

    @property
    def title(self) -> str:
        return self.name.lower()


def class_names() -> list[str]:
    return [c.title for c in ClassLabel]


NUM_CLASSES = len(ClassLabel)
