"""Global fact interning.

Every structurally distinct fact gets exactly one 64-bit id, packed as
``rel << 48 | bucket << 32 | counter``. The bucket is the fact's canonical
bucket (a seed-free hash of all its columns modulo the bucket count), and
counters are bump-allocated per (relation, bucket), so interning for a bucket
only ever touches that bucket's shard.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

from .errors import ArityError, CapacityError, FactLookupError

logger = logging.getLogger(__name__)

REL_BITS = 16
BUCKET_BITS = 16
COUNTER_BITS = 32

MAX_REL = (1 << REL_BITS) - 1
MAX_BUCKET = (1 << BUCKET_BITS) - 1
MAX_COUNTER = (1 << COUNTER_BITS) - 1

INT_MIN = -(1 << 63)
INT_MAX = (1 << 63) - 1
MASK64 = (1 << 64) - 1

_VALUE_STRUCT = struct.Struct(">BQ")


class ValueKind(IntEnum):
    FACT_ID = 0
    INT = 1
    STR = 2


class Value(NamedTuple):
    kind: ValueKind
    payload: int

    @property
    def is_fact(self) -> bool:
        return self.kind is ValueKind.FACT_ID


def fact_value(fact_id: int) -> Value:
    return Value(ValueKind.FACT_ID, fact_id)


def int_value(number: int) -> Value:
    if not INT_MIN <= number <= INT_MAX:
        raise CapacityError(f"integer literal {number} does not fit in 64 signed bits")
    return Value(ValueKind.INT, number)


def str_value(handle: int) -> Value:
    return Value(ValueKind.STR, handle)


def pack_id(rel: int, bucket: int, counter: int) -> int:
    if not 0 <= rel <= MAX_REL:
        raise CapacityError(f"relation id {rel} out of range")
    if not 0 <= bucket <= MAX_BUCKET:
        raise CapacityError(f"bucket id {bucket} out of range")
    if not 0 <= counter <= MAX_COUNTER:
        raise CapacityError(f"counter {counter} out of range")
    return (rel << (BUCKET_BITS + COUNTER_BITS)) | (bucket << COUNTER_BITS) | counter


def unpack_id(fact_id: int) -> Tuple[int, int, int]:
    return (
        (fact_id >> (BUCKET_BITS + COUNTER_BITS)) & MAX_REL,
        (fact_id >> COUNTER_BITS) & MAX_BUCKET,
        fact_id & MAX_COUNTER,
    )


def stable_hash(values: Sequence[Value]) -> int:
    digest = hashlib.blake2b(digest_size=8)
    for value in values:
        digest.update(_VALUE_STRUCT.pack(int(value.kind), value.payload & MASK64))
    return int.from_bytes(digest.digest(), "big")


class NestedFact(NamedTuple):
    """A fact as a plain tree, with no ids: ``rel(arg, ...)``."""

    rel: str
    args: Tuple["NestedArg", ...] = ()

    def __str__(self) -> str:
        return format_nested(self)


NestedArg = Union[NestedFact, int, str]


def format_literal(literal: Union[int, str]) -> str:
    if isinstance(literal, str):
        return json.dumps(literal, ensure_ascii=False)
    return str(literal)


def format_nested(item: NestedArg) -> str:
    if isinstance(item, NestedFact):
        return f"{item.rel}({', '.join(format_nested(arg) for arg in item.args)})"
    return format_literal(item)


def nested_height(item: NestedArg) -> int:
    if not isinstance(item, NestedFact):
        return 0
    return 1 + max((nested_height(arg) for arg in item.args), default=0)


@dataclass(frozen=True)
class RelationInfo:
    name: str
    rel_id: int
    arity: int


class LiteralPool:
    """Append-only string pool; a handle is the insertion index."""

    def __init__(self) -> None:
        self._strings: List[str] = []
        self._handles: Dict[str, int] = {}

    def __len__(self) -> int:
        return len(self._strings)

    def intern(self, text: str) -> int:
        handle = self._handles.get(text)
        if handle is None:
            handle = len(self._strings)
            self._strings.append(text)
            self._handles[text] = handle
        return handle

    def find(self, text: str) -> Optional[int]:
        return self._handles.get(text)

    def text(self, handle: int) -> str:
        if not 0 <= handle < len(self._strings):
            raise FactLookupError(f"unknown string handle {handle}")
        return self._strings[handle]


@dataclass
class _Shard:
    index: Dict[Tuple[int, Tuple[Value, ...]], int] = field(default_factory=dict)
    rows: Dict[int, Tuple[int, Tuple[Value, ...]]] = field(default_factory=dict)
    heights: Dict[int, int] = field(default_factory=dict)
    counters: Dict[int, int] = field(default_factory=dict)


class TermStore:
    """Bidirectional map between facts and their intern ids.

    Relation registration and string interning happen single-threaded before
    evaluation. During evaluation only the owner of a bucket calls
    :meth:`insert` for facts whose canonical bucket it is; reads may come from
    any worker between supersteps.
    """

    def __init__(self, buckets: int = 1) -> None:
        if not 1 <= buckets <= MAX_BUCKET + 1:
            raise CapacityError(f"bucket count {buckets} out of range")
        self.buckets = buckets
        self.strings = LiteralPool()
        self._relations: Dict[str, RelationInfo] = {}
        self._by_id: Dict[int, RelationInfo] = {}
        self._shards = [_Shard() for _ in range(buckets)]
        self._printed: Dict[int, str] = {}
        self._nested: Dict[int, NestedFact] = {}

    def __len__(self) -> int:
        return sum(len(shard.rows) for shard in self._shards)

    # ------------------------------------------------------------------
    # Relations and literals
    # ------------------------------------------------------------------
    def register(self, name: str, arity: int) -> RelationInfo:
        info = self._relations.get(name)
        if info is not None:
            if info.arity != arity:
                raise ArityError(
                    f"relation '{name}' used with arity {arity}, declared with {info.arity}"
                )
            return info
        rel_id = len(self._relations) + 1
        if rel_id > MAX_REL:
            raise CapacityError("too many relations for a 16-bit relation id")
        info = RelationInfo(name, rel_id, arity)
        self._relations[name] = info
        self._by_id[rel_id] = info
        return info

    def relation(self, name: str) -> RelationInfo:
        try:
            return self._relations[name]
        except KeyError as exc:
            raise FactLookupError(f"unknown relation '{name}'") from exc

    def relation_by_id(self, rel_id: int) -> RelationInfo:
        try:
            return self._by_id[rel_id]
        except KeyError as exc:
            raise FactLookupError(f"unknown relation id {rel_id}") from exc

    @property
    def relations(self) -> List[RelationInfo]:
        return list(self._relations.values())

    def literal(self, literal: Union[int, str]) -> Value:
        if isinstance(literal, str):
            return str_value(self.strings.intern(literal))
        return int_value(literal)

    def bucket_of(self, args: Sequence[Value]) -> int:
        return stable_hash(args) % self.buckets

    # ------------------------------------------------------------------
    # Interning
    # ------------------------------------------------------------------
    def insert(self, info: RelationInfo, args: Tuple[Value, ...]) -> Tuple[int, bool]:
        """Intern ``info(args)``; returns ``(id, fresh)``."""
        if len(args) != info.arity:
            raise ArityError(
                f"relation '{info.name}' has arity {info.arity}, got {len(args)} columns"
            )
        bucket = self.bucket_of(args)
        shard = self._shards[bucket]
        key = (info.rel_id, args)
        existing = shard.index.get(key)
        if existing is not None:
            return existing, False
        height = self.height_of(args)
        counter = shard.counters.get(info.rel_id, 0)
        if counter > MAX_COUNTER:
            raise CapacityError(
                f"bucket {bucket} of relation '{info.name}' exhausted its 32-bit counter"
            )
        fact_id = pack_id(info.rel_id, bucket, counter)
        shard.counters[info.rel_id] = counter + 1
        shard.index[key] = fact_id
        shard.rows[fact_id] = key
        shard.heights[fact_id] = height
        return fact_id, True

    def intern(self, rel: Union[str, RelationInfo], args: Sequence[Value]) -> Value:
        info = rel if isinstance(rel, RelationInfo) else self.register(rel, len(args))
        for arg in args:
            if arg.kind is ValueKind.FACT_ID and not self.contains(arg.payload):
                raise FactLookupError(f"argument id {arg.payload:#018x} was never interned")
        fact_id, _ = self.insert(info, tuple(args))
        return fact_value(fact_id)

    def intern_nested(self, fact: NestedFact) -> Value:
        """Intern a ground tree bottom-up, so every subfact is stored too."""
        args = tuple(
            self.intern_nested(arg) if isinstance(arg, NestedFact) else self.literal(arg)
            for arg in fact.args
        )
        return self.intern(fact.rel, args)

    def lookup(self, rel: Union[str, RelationInfo], args: Sequence[Value]) -> Optional[Value]:
        info = rel if isinstance(rel, RelationInfo) else self._relations.get(rel)
        if info is None:
            return None
        args = tuple(args)
        fact_id = self._shards[self.bucket_of(args)].index.get((info.rel_id, args))
        return None if fact_id is None else fact_value(fact_id)

    # ------------------------------------------------------------------
    # Resolution
    # ------------------------------------------------------------------
    def contains(self, fact_id: int) -> bool:
        bucket = unpack_id(fact_id)[1]
        return bucket < self.buckets and fact_id in self._shards[bucket].rows

    def row(self, fact_id: int) -> Tuple[int, Tuple[Value, ...]]:
        bucket = unpack_id(fact_id)[1]
        try:
            return self._shards[bucket].rows[fact_id]
        except (KeyError, IndexError) as exc:
            raise FactLookupError(f"unknown fact id {fact_id:#018x}") from exc

    def resolve(self, fact: Union[Value, int]) -> Tuple[str, Tuple[Value, ...]]:
        fact_id = _fact_id(fact)
        rel_id, args = self.row(fact_id)
        return self._by_id[rel_id].name, args

    def height(self, fact: Union[Value, int]) -> int:
        fact_id = _fact_id(fact)
        try:
            return self._shards[unpack_id(fact_id)[1]].heights[fact_id]
        except (KeyError, IndexError) as exc:
            raise FactLookupError(f"unknown fact id {fact_id:#018x}") from exc

    def height_of(self, args: Sequence[Value]) -> int:
        """Height a fact with these columns has (or would have)."""
        height = 1
        for arg in args:
            if arg.kind is ValueKind.FACT_ID:
                height = max(height, self.height(arg.payload) + 1)
        return height

    def facts(self, rel: Optional[str] = None) -> Iterator[int]:
        rel_id = None if rel is None else self.relation(rel).rel_id
        for shard in self._shards:
            for fact_id, (row_rel, _) in shard.rows.items():
                if rel_id is None or row_rel == rel_id:
                    yield fact_id

    # ------------------------------------------------------------------
    # Printing
    # ------------------------------------------------------------------
    def format_value(self, value: Value) -> str:
        if value.kind is ValueKind.FACT_ID:
            return self.deep_print(value)
        if value.kind is ValueKind.STR:
            return format_literal(self.strings.text(value.payload))
        return str(value.payload)

    def deep_print(self, fact: Union[Value, int]) -> str:
        fact_id = _fact_id(fact)
        cached = self._printed.get(fact_id)
        if cached is None:
            name, args = self.resolve(fact_id)
            cached = f"{name}({', '.join(self.format_value(arg) for arg in args)})"
            self._printed[fact_id] = cached
        return cached

    def to_nested(self, fact: Union[Value, int]) -> NestedFact:
        fact_id = _fact_id(fact)
        cached = self._nested.get(fact_id)
        if cached is None:
            name, args = self.resolve(fact_id)
            cached = NestedFact(name, tuple(self.literal_of(arg) for arg in args))
            self._nested[fact_id] = cached
        return cached

    def literal_of(self, value: Value) -> NestedArg:
        if value.kind is ValueKind.FACT_ID:
            return self.to_nested(value)
        if value.kind is ValueKind.STR:
            return self.strings.text(value.payload)
        return value.payload

    def dump_intern_table(self) -> List[str]:
        ids = sorted(fact_id for shard in self._shards for fact_id in shard.rows)
        return [f"{fact_id:#018x}\t{self.deep_print(fact_id)}" for fact_id in ids]


def _fact_id(fact: Union[Value, int]) -> int:
    if isinstance(fact, Value):
        if fact.kind is not ValueKind.FACT_ID:
            raise FactLookupError(f"{fact!r} is not a fact id")
        return fact.payload
    return fact
