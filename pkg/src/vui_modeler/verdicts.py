from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Verdict:
    """Checker outcome; ``ref`` names the state or input a suggestion points at."""

    kind: str
    ref: str | None = None

    @property
    def accepted(self) -> bool:
        return self.kind in ("Accept", "Ok")

    def __str__(self) -> str:
        return self.kind if self.ref is None else f"{self.kind}({self.ref})"


ACCEPT = Verdict("Accept")
OK = Verdict("Ok")
