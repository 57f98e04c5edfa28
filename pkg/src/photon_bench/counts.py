"""Count tables: the hand-off between simulation and analysis."""
from __future__ import annotations

import hashlib
from collections.abc import Mapping
from typing import Iterable, Iterator


class CountTable(Mapping):
    """Immutable map ``(setting, outcome) -> count``.

    ``setting`` is a string of per-qubit bases (``"ZZZ"``, ``"YXY"``, ``"X"``),
    ``outcome`` a string of outcome labels of the same length
    (``"HHV"``, ``"RL+"``). Zero counts are kept, so a table remembers which
    outcomes were possible for a setting.
    """

    __slots__ = ("_data",)

    def __init__(self, entries: Mapping[tuple[str, str], int] | Iterable[tuple[tuple[str, str], int]] = ()):
        items = entries.items() if isinstance(entries, Mapping) else entries
        data: dict[tuple[str, str], int] = {}
        for (setting, outcome), count in items:
            if len(setting) != len(outcome):
                raise ValueError(f"outcome {outcome!r} does not match setting {setting!r}")
            count = int(count)
            if count < 0:
                raise ValueError(f"negative count for {(setting, outcome)}")
            key = (str(setting), str(outcome))
            data[key] = data.get(key, 0) + count
        self._data = dict(sorted(data.items()))

    def __getitem__(self, key: tuple[str, str]) -> int:
        return self._data[key]

    def __iter__(self) -> Iterator[tuple[str, str]]:
        return iter(self._data)

    def __len__(self) -> int:
        return len(self._data)

    def __repr__(self) -> str:
        return f"CountTable({self._data!r})"

    def __add__(self, other: "CountTable") -> "CountTable":
        if not isinstance(other, CountTable):
            return NotImplemented
        return CountTable(list(self.items()) + list(other.items()))

    def settings(self) -> list[str]:
        return sorted({s for s, _ in self._data})

    def setting_counts(self, setting: str) -> dict[str, int]:
        return {o: c for (s, o), c in self._data.items() if s == setting}

    def total(self, setting: str | None = None) -> int:
        if setting is None:
            return sum(self._data.values())
        return sum(c for (s, _), c in self._data.items() if s == setting)

    def get_count(self, setting: str, outcome: str) -> int:
        return self._data.get((setting, outcome), 0)

    def restrict(self, settings: Iterable[str]) -> "CountTable":
        keep = set(settings)
        return CountTable({k: v for k, v in self._data.items() if k[0] in keep})

    def scaled(self, factor: int) -> "CountTable":
        return CountTable({k: v * factor for k, v in self._data.items()})

    def to_rows(self) -> list[tuple[str, str, int]]:
        return [(s, o, c) for (s, o), c in self._data.items()]

    def digest(self) -> str:
        """Short stable hash of the canonical contents."""
        text = "\n".join(f"{s},{o},{c}" for s, o, c in self.to_rows())
        return hashlib.sha256(text.encode()).hexdigest()[:16]
