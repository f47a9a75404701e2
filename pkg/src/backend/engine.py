"""Bulk-synchronous fixpoint evaluation over bucketed relations.

A superstep runs five phases, each executed by every worker and separated by a
barrier (the gather of the phase's results):

1. intra-bucket: outer rows of each rule version are sent to the owner of the
   (bucket, sub-bucket) cell given by the hash of their join key;
2. local join: each worker joins its rows against the shared, read-only
   indices and emits head rows;
3. exchange: head rows travel to the owner of their canonical bucket;
4. intern: owners deduplicate against the interning index and allocate ids;
5. materialize: fresh facts enter ``new`` and are forwarded to the owners of
   their secondary-index buckets.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import (
    Callable,
    Dict,
    Iterable,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    Set,
    Tuple,
    TypeVar,
)

import numpy as np

from .errors import ArityError, HeightLimitExceeded, IngestError, IterationLimitExceeded
from .planner import ALL, DELTA, FULL, AntiJoin, JoinStep, PlannedRule, ProgramPlan
from .syntax import parse_fact, parse_facts
from .terms import NestedArg, NestedFact, RelationInfo, TermStore, Value, ValueKind, fact_value, stable_hash, unpack_id

logger = logging.getLogger(__name__)

NEW = "new"
PHASES = ("intra_bucket", "local_join", "exchange", "intern", "materialize")

_SOURCES: Dict[str, Tuple[str, ...]] = {FULL: (FULL,), DELTA: (DELTA,), ALL: (FULL, DELTA)}

Row = Tuple[int, Tuple[Value, ...]]
T = TypeVar("T")


@dataclass
class EvalConfig:
    workers: int = 1
    buckets: Optional[int] = None
    subbuckets: int = 1
    max_iterations: Optional[int] = None
    max_fact_height: Optional[int] = None
    trace: bool = False

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.buckets is None:
            self.buckets = 4 * self.workers
        if self.buckets < self.workers:
            raise ValueError("buckets must be at least the number of workers")
        if self.subbuckets < 1:
            raise ValueError("subbuckets must be at least 1")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.max_fact_height is not None and self.max_fact_height < 1:
            raise ValueError("max_fact_height must be positive")

    @property
    def bucket_count(self) -> int:
        assert self.buckets is not None
        return self.buckets


@dataclass(frozen=True)
class TraceStep:
    stratum: int
    superstep: int
    ids: Tuple[int, ...]


# Called after each superstep once new facts have rotated into the delta.
SuperstepHook = Callable[[TraceStep, "Database"], None]


@dataclass
class RunStats:
    supersteps: List[int] = field(default_factory=list)
    phase_seconds: Dict[str, float] = field(default_factory=lambda: {name: 0.0 for name in PHASES})
    facts: Dict[str, int] = field(default_factory=dict)
    bucket_counts: List[int] = field(default_factory=list)

    @property
    def bucket_load_ratio(self) -> float:
        counts = np.asarray(self.bucket_counts, dtype=np.int64)
        if counts.size == 0 or counts.max() == 0:
            return 1.0
        if counts.min() == 0:
            return float("inf")
        return float(counts.max() / counts.min())

    def to_lines(self) -> List[str]:
        lines = [f"strata\t{len(self.supersteps)}"]
        lines.extend(f"supersteps.{index}\t{count}" for index, count in enumerate(self.supersteps))
        lines.extend(f"facts.{name}\t{count}" for name, count in sorted(self.facts.items()))
        lines.extend(f"seconds.{name}\t{self.phase_seconds[name]:.6f}" for name in PHASES)
        lines.append(f"bucket_load_ratio\t{self.bucket_load_ratio:.3f}")
        return lines


def phase_partition(
    key: Sequence[Value],
    rest: Sequence[Value],
    buckets: int,
    subbuckets: int,
    workers: int,
) -> Tuple[int, int, int]:
    """Cell of a row: ``(bucket, subbucket, worker)``."""
    bucket = stable_hash(key) % buckets
    subbucket = stable_hash(rest) % subbuckets if subbuckets > 1 else 0
    return bucket, subbucket, (bucket * subbuckets + subbucket) % workers


# ----------------------------------------------------------------------
# Storage
# ----------------------------------------------------------------------
def _empty(buckets: int) -> List[dict]:
    return [{} for _ in range(buckets)]


class RelationData:
    """Full/delta/new partitions of one relation, each split by bucket.

    Rows live in their canonical bucket (the id's bucket field). A secondary
    index on ``cols`` maps key values to rows, bucketed by the key's hash.
    """

    def __init__(self, info: RelationInfo, buckets: int, index_columns: Iterable[Tuple[int, ...]]) -> None:
        self.info = info
        self.buckets = buckets
        self.parts: Dict[str, List[Dict[int, Tuple[Value, ...]]]] = {
            part: _empty(buckets) for part in (FULL, DELTA, NEW)
        }
        self.indices: Dict[Tuple[int, ...], Dict[str, List[Dict[Tuple[Value, ...], List[Row]]]]] = {
            cols: {part: _empty(buckets) for part in (FULL, DELTA, NEW)} for cols in index_columns
        }

    def key_bucket(self, key: Sequence[Value]) -> int:
        return stable_hash(key) % self.buckets

    def ensure_index(self, cols: Tuple[int, ...]) -> None:
        if cols in self.indices:
            return
        partitions: Dict[str, List[Dict[Tuple[Value, ...], List[Row]]]] = {
            part: _empty(self.buckets) for part in (FULL, DELTA, NEW)
        }
        for part, shards in self.parts.items():
            for shard in shards:
                for fact_id, args in shard.items():
                    key = tuple(args[c] for c in cols)
                    partitions[part][self.key_bucket(key)].setdefault(key, []).append((fact_id, args))
        self.indices[cols] = partitions

    def insert(self, part: str, fact_id: int, args: Tuple[Value, ...]) -> None:
        self.parts[part][unpack_id(fact_id)[1]][fact_id] = args
        for cols, partitions in self.indices.items():
            key = tuple(args[c] for c in cols)
            partitions[part][self.key_bucket(key)].setdefault(key, []).append((fact_id, args))

    def contains(self, fact_id: int, parts: Sequence[str] = (FULL, DELTA, NEW)) -> bool:
        bucket = unpack_id(fact_id)[1]
        if bucket >= self.buckets:
            return False
        return any(fact_id in self.parts[part][bucket] for part in parts)

    def get(self, fact_id: int, parts: Sequence[str]) -> Optional[Tuple[Value, ...]]:
        bucket = unpack_id(fact_id)[1]
        if bucket >= self.buckets:
            return None
        for part in parts:
            args = self.parts[part][bucket].get(fact_id)
            if args is not None:
                return args
        return None

    def probe(self, cols: Tuple[int, ...], key: Tuple[Value, ...], parts: Sequence[str]) -> Iterator[Row]:
        partitions = self.indices[cols]
        bucket = self.key_bucket(key)
        for part in parts:
            yield from partitions[part][bucket].get(key, ())

    def scan(self, parts: Sequence[str], buckets: Optional[Iterable[int]] = None) -> Iterator[Row]:
        for part in parts:
            for bucket in range(self.buckets) if buckets is None else buckets:
                yield from self.parts[part][bucket].items()

    def size(self, parts: Sequence[str] = (FULL, DELTA, NEW)) -> int:
        return sum(len(shard) for part in parts for shard in self.parts[part])

    def promote(self) -> None:
        """Turn everything stored so far into the delta (a stratum's initial frontier)."""
        self.parts[DELTA], self.parts[FULL] = self.parts[FULL], _empty(self.buckets)
        for partitions in self.indices.values():
            partitions[DELTA], partitions[FULL] = partitions[FULL], _empty(self.buckets)

    def rotate(self) -> None:
        """``full += delta``; ``delta = new``; ``new = {}``."""
        for bucket in range(self.buckets):
            self.parts[FULL][bucket].update(self.parts[DELTA][bucket])
        self.parts[DELTA], self.parts[NEW] = self.parts[NEW], _empty(self.buckets)
        for partitions in self.indices.values():
            for bucket in range(self.buckets):
                full = partitions[FULL][bucket]
                for key, rows in partitions[DELTA][bucket].items():
                    full.setdefault(key, []).extend(rows)
            partitions[DELTA], partitions[NEW] = partitions[NEW], _empty(self.buckets)


class Database:
    """All stored facts of a run, plus the term store that names them."""

    def __init__(self, store: TermStore, plan: Optional[ProgramPlan] = None) -> None:
        self.store = store
        self.plan = plan
        self.buckets = store.buckets
        self.relations: Dict[str, RelationData] = {}
        self.edb_ids: Set[int] = set()
        self.stats = RunStats()
        self.trace: List[TraceStep] = []
        if plan is not None:
            self.attach(plan)

    def attach(self, plan: ProgramPlan) -> None:
        """Use ``plan``'s index set, building any index that is missing."""
        self.plan = plan
        for name in plan.relations:
            data = self.relation(name)
            for cols in plan.secondary_indices(name):
                data.ensure_index(cols)

    def relation(self, name: str) -> RelationData:
        data = self.relations.get(name)
        if data is None:
            columns = self.plan.secondary_indices(name) if self.plan and name in self.plan.relations else []
            data = RelationData(self.store.relation(name), self.buckets, columns)
            self.relations[name] = data
        return data

    # Ingestion ---------------------------------------------------------
    def ingest_nested(self, fact: NestedFact) -> Value:
        if not isinstance(fact, NestedFact):
            raise IngestError(f"{fact!r} is not a ground fact")
        args: List[Value] = []
        for arg in fact.args:
            if isinstance(arg, NestedFact):
                args.append(self.ingest_nested(arg))
            elif isinstance(arg, (int, str)) and not isinstance(arg, bool):
                args.append(self.store.literal(arg))
            else:
                raise IngestError(f"non-ground or unsupported value {arg!r} in {fact.rel}(...)")
        try:
            info = self.store.register(fact.rel, len(args))
        except ArityError as exc:
            raise IngestError(str(exc)) from exc
        fact_id, _ = self.store.insert(info, tuple(args))
        data = self.relation(info.name)
        if not data.contains(fact_id):
            data.insert(FULL, fact_id, tuple(args))
        self.edb_ids.add(fact_id)
        return fact_value(fact_id)

    # Queries -----------------------------------------------------------
    def relation_names(self) -> List[str]:
        return sorted(self.relations)

    def rows(self, name: str) -> List[Row]:
        if name not in self.relations:
            return []
        return sorted(self.relations[name].scan((FULL, DELTA, NEW)))

    def ids(self, name: Optional[str] = None) -> List[int]:
        names = [name] if name is not None else self.relation_names()
        return sorted(fact_id for rel in names for fact_id, _ in self.rows(rel))

    def contains(self, fact_id: int) -> bool:
        rel_id = unpack_id(fact_id)[0]
        if rel_id == 0 or rel_id > len(self.store.relations):
            return False
        data = self.relations.get(self.store.relation_by_id(rel_id).name)
        return data is not None and data.contains(fact_id)

    def count(self, name: Optional[str] = None) -> int:
        if name is not None:
            return self.relations[name].size() if name in self.relations else 0
        return sum(data.size() for data in self.relations.values())

    def nested_facts(self, name: Optional[str] = None) -> Set[NestedFact]:
        return {self.store.to_nested(fact_id) for fact_id in self.ids(name)}

    def lookup_nested(self, fact: NestedFact) -> Optional[int]:
        """Id of a stored fact given as a tree, or ``None``."""
        args: List[Value] = []
        for arg in fact.args:
            if isinstance(arg, NestedFact):
                child = self.lookup_nested(arg)
                if child is None:
                    return None
                args.append(fact_value(child))
            elif isinstance(arg, str):
                handle = self.store.strings.find(arg)
                if handle is None:
                    return None
                args.append(Value(ValueKind.STR, handle))
            else:
                args.append(self.store.literal(arg))
        found = self.store.lookup(fact.rel, args)
        if found is None or not self.contains(found.payload):
            return None
        return found.payload

    def bucket_counts(self) -> List[int]:
        counts = np.zeros(self.buckets, dtype=np.int64)
        for data in self.relations.values():
            for part in (FULL, DELTA, NEW):
                counts += np.fromiter((len(shard) for shard in data.parts[part]), dtype=np.int64, count=self.buckets)
        return counts.tolist()


# ----------------------------------------------------------------------
# Evaluation
# ----------------------------------------------------------------------
_Emission = Tuple[RelationInfo, Tuple[Value, ...], bool]
_Fresh = Tuple[RelationInfo, int, Tuple[Value, ...]]


class Evaluator:
    def __init__(
        self,
        plan: ProgramPlan,
        db: Database,
        config: EvalConfig,
        on_superstep: Optional[SuperstepHook] = None,
    ) -> None:
        if db.buckets != config.bucket_count:
            raise ValueError(
                f"term store has {db.buckets} buckets, configuration asks for {config.bucket_count}"
            )
        self.plan = plan
        self.db = db
        self.store = db.store
        self.config = config
        self.workers = config.workers
        self.buckets = config.bucket_count
        self._pool: Optional[ThreadPoolExecutor] = None
        self.on_superstep = on_superstep

    # Worker plumbing -----------------------------------------------------
    def _phase(self, name: str, task: Callable[[int], T]) -> List[T]:
        started = time.perf_counter()
        if self._pool is None:
            results = [task(worker) for worker in range(self.workers)]
        else:
            futures = [self._pool.submit(task, worker) for worker in range(self.workers)]
            results = [future.result() for future in futures]
        self.db.stats.phase_seconds[name] += time.perf_counter() - started
        return results

    def _owned(self, worker: int) -> range:
        return range(worker, self.buckets, self.workers)

    def _exchange(self, outboxes: Sequence[Sequence[List[T]]]) -> List[List[T]]:
        inboxes: List[List[T]] = [[] for _ in range(self.workers)]
        for outbox in outboxes:
            for dest, messages in enumerate(outbox):
                inboxes[dest].extend(messages)
        return inboxes

    # Join machinery ------------------------------------------------------
    def _candidates(self, step: JoinStep, env: List[Optional[Value]]) -> Iterator[Row]:
        data = self.db.relation(step.relation.name)
        parts = _SOURCES[step.source]
        if step.mode == "scan":
            yield from data.scan(parts)
        elif step.mode == "index":
            key = tuple(operand.read(env) for operand in step.key)
            yield from data.probe(step.key_columns, key, parts)
        elif step.mode == "canonical":
            args = tuple(operand.read(env) for operand in step.key)
            found = self.store.lookup(step.relation, args)
            if found is not None and data.contains(found.payload, parts):
                yield found.payload, args
        else:
            assert step.id_slot is not None
            value = env[step.id_slot]
            if value is None or value.kind is not ValueKind.FACT_ID:
                return
            if unpack_id(value.payload)[0] != step.relation.rel_id:
                return
            args = data.get(value.payload, parts)
            if args is not None:
                yield value.payload, args

    @staticmethod
    def _bind(step: JoinStep, fact_id: int, args: Tuple[Value, ...], env: List[Optional[Value]]) -> bool:
        for op in step.columns:
            value = fact_value(fact_id) if op.column < 0 else args[op.column]
            if op.action == "bind":
                env[op.operand.slot] = value
            elif value != op.operand.read(env):
                return False
        if step.bind_id is not None:
            env[step.bind_id] = fact_value(fact_id)
        return all(check.holds(env) for check in step.filters)

    def _key_matches(self, step: JoinStep, args: Tuple[Value, ...], env: List[Optional[Value]]) -> bool:
        if step.mode not in ("index", "canonical"):
            return True
        return all(args[col] == operand.read(env) for col, operand in zip(step.key_columns, step.key))

    def _anti_hit(self, anti: AntiJoin, env: List[Optional[Value]]) -> bool:
        data = self.db.relation(anti.relation.name)
        key = tuple(operand.read(env) for operand in anti.key)
        if anti.canonical:
            found = self.store.lookup(anti.relation, key)
            return found is not None and data.contains(found.payload, (FULL, DELTA))
        if not anti.key_columns:
            return data.size((FULL, DELTA)) > 0
        return any(True for _ in data.probe(anti.key_columns, key, (FULL, DELTA)))

    def _join(self, version: PlannedRule, depth: int, env: List[Optional[Value]], out: List[_Emission]) -> None:
        if depth == len(version.steps):
            for anti in version.anti_joins:
                if self._anti_hit(anti, env):
                    return
            out.append((version.head, tuple(op.read(env) for op in version.head_args), version.rule.fact))
            return
        step = version.steps[depth]
        for fact_id, args in self._candidates(step, env):
            if self._bind(step, fact_id, args, env):
                self._join(version, depth + 1, env, out)

    def _cell(self, version: PlannedRule, env: List[Optional[Value]], args: Tuple[Value, ...]) -> int:
        if len(version.steps) < 2:
            key: Tuple[Value, ...] = ()
        else:
            nxt = version.steps[1]
            if nxt.mode == "id":
                assert nxt.id_slot is not None
                key = (env[nxt.id_slot],)  # type: ignore[assignment]
            else:
                key = tuple(operand.read(env) for operand in nxt.key)
        return phase_partition(key, args, self.buckets, self.config.subbuckets, self.workers)[2]

    # Phases --------------------------------------------------------------
    def phase_intra_bucket(self, versions: Sequence[PlannedRule]) -> List[List[Tuple[int, Row]]]:
        def task(worker: int) -> List[List[Tuple[int, Row]]]:
            outbox: List[List[Tuple[int, Row]]] = [[] for _ in range(self.workers)]
            owned = self._owned(worker)
            for number, version in enumerate(versions):
                if not version.steps or not all(check.holds([]) for check in version.filters):
                    continue
                outer = version.steps[0]
                data = self.db.relation(outer.relation.name)
                env: List[Optional[Value]] = [None] * len(version.slots)
                for fact_id, args in data.scan(_SOURCES[outer.source], owned):
                    if self._key_matches(outer, args, env) and self._bind(outer, fact_id, args, env):
                        outbox[self._cell(version, env, args)].append((number, (fact_id, args)))
            return outbox

        return self._exchange(self._phase("intra_bucket", task))

    def phase_local_join(
        self, versions: Sequence[PlannedRule], inboxes: Sequence[List[Tuple[int, Row]]], first: bool
    ) -> List[List[_Emission]]:
        def task(worker: int) -> List[_Emission]:
            out: List[_Emission] = []
            if worker == 0 and first:
                for version in versions:
                    if not version.steps and all(check.holds([]) for check in version.filters):
                        self._join(version, 0, [None] * len(version.slots), out)
            for number, (fact_id, args) in inboxes[worker]:
                version = versions[number]
                env: List[Optional[Value]] = [None] * len(version.slots)
                if self._bind(version.steps[0], fact_id, args, env):
                    self._join(version, 1, env, out)
            return out

        return self._phase("local_join", task)

    def phase_exchange(self, emitted: Sequence[List[_Emission]]) -> List[List[_Emission]]:
        def task(worker: int) -> List[List[_Emission]]:
            outbox: List[List[_Emission]] = [[] for _ in range(self.workers)]
            for emission in emitted[worker]:
                outbox[self.store.bucket_of(emission[1]) % self.workers].append(emission)
            return outbox

        return self._exchange(self._phase("exchange", task))

    def phase_intern(self, inboxes: Sequence[List[_Emission]]) -> List[Tuple[List[_Fresh], List[int]]]:
        limit = self.config.max_fact_height

        def task(worker: int) -> Tuple[List[_Fresh], List[int]]:
            fresh: List[_Fresh] = []
            given: List[int] = []
            for info, args, is_fact in inboxes[worker]:
                existing = self.store.lookup(info, args)
                if existing is None and limit is not None and self.store.height_of(args) > limit:
                    text = f"{info.name}({', '.join(self.store.format_value(a) for a in args)})"
                    raise HeightLimitExceeded(limit, text)
                fact_id, is_new = self.store.insert(info, args)
                if is_new:
                    fresh.append((info, fact_id, args))
                if is_fact:
                    given.append(fact_id)
            return fresh, given

        return self._phase("intern", task)

    def phase_materialize(self, interned: Sequence[Tuple[List[_Fresh], List[int]]]) -> List[int]:
        def place(worker: int) -> List[List[Tuple[RelationData, Tuple[int, ...], Tuple[Value, ...], Row]]]:
            outbox: List[List[Tuple[RelationData, Tuple[int, ...], Tuple[Value, ...], Row]]] = [
                [] for _ in range(self.workers)
            ]
            for info, fact_id, args in interned[worker][0]:
                data = self.db.relation(info.name)
                data.parts[NEW][unpack_id(fact_id)[1]][fact_id] = args
                for cols in data.indices:
                    key = tuple(args[c] for c in cols)
                    outbox[data.key_bucket(key) % self.workers].append((data, cols, key, (fact_id, args)))
            return outbox

        def index(worker: int) -> None:
            for data, cols, key, row in inboxes[worker]:
                data.indices[cols][NEW][data.key_bucket(key)].setdefault(key, []).append(row)

        inboxes = self._exchange(self._phase("materialize", place))
        self._phase("materialize", index)
        ids: List[int] = []
        for fresh, given in interned:
            ids.extend(fact_id for _, fact_id, _ in fresh)
            self.db.edb_ids.update(given)
        return ids

    def superstep(self, versions: Sequence[PlannedRule], first: bool = False) -> List[int]:
        """Run the five phases once; returns the ids placed in ``new``."""
        inboxes = self.phase_intra_bucket(versions)
        emitted = self.phase_local_join(versions, inboxes, first)
        routed = self.phase_exchange(emitted)
        fresh = self.phase_intern(routed)
        return self.phase_materialize(fresh)

    def run_stratum(self, index: int) -> int:
        stratum = self.plan.strata[index]
        versions = self.plan.versions[index]
        if not versions:
            self.db.stats.supersteps.append(0)
            return 0
        members = [self.db.relation(name) for name in sorted(stratum.relations)]
        for data in members:
            data.promote()
        recurring = [version for version in versions if not version.once]
        count = 0
        while True:
            count += 1
            active = versions if count == 1 else recurring
            step = TraceStep(index, count, tuple(self.superstep(active, first=count == 1)))
            if self.config.trace:
                self.db.trace.append(step)
            for data in members:
                data.rotate()
            if self.on_superstep is not None:
                self.on_superstep(step, self.db)
            pending = sum(data.size((DELTA,)) for data in members)
            logger.debug("stratum %d superstep %d: %d new facts", index, count, pending)
            if pending == 0:
                break
            if self.config.max_iterations is not None and count >= self.config.max_iterations:
                raise IterationLimitExceeded(self.config.max_iterations, index)
        self.db.stats.supersteps.append(count)
        return count

    def run(self) -> Database:
        if self.workers > 1:
            self._pool = ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix="slogette")
        try:
            for index in range(len(self.plan.strata)):
                self.run_stratum(index)
        finally:
            if self._pool is not None:
                self._pool.shutdown(wait=True)
                self._pool = None
        stats = self.db.stats
        stats.facts = {name: self.db.count(name) for name in self.db.relation_names()}
        stats.bucket_counts = self.db.bucket_counts()
        logger.info(
            "Fixpoint reached: %d facts in %d supersteps over %d strata",
            self.db.count(),
            sum(stats.supersteps),
            len(stats.supersteps),
        )
        return self.db


def subfact_close_ingest(
    facts: Iterable[NestedFact], store: TermStore, plan: Optional[ProgramPlan] = None
) -> Database:
    """Store every fact together with all of its subfacts."""
    db = Database(store, plan)
    for fact in facts:
        db.ingest_nested(fact)
    logger.debug("Ingested %d facts (with subfacts)", len(db.edb_ids))
    return db


def run_fixpoint(
    plan: ProgramPlan,
    db: Database,
    config: Optional[EvalConfig] = None,
    on_superstep: Optional[SuperstepHook] = None,
) -> Database:
    opts = config or EvalConfig(buckets=db.buckets)
    db.attach(plan)
    return Evaluator(plan, db, opts, on_superstep).run()


# ----------------------------------------------------------------------
# Fact files
# ----------------------------------------------------------------------
def parse_cell(text: str) -> NestedArg:
    """One TSV cell: an integer, a quoted string, a ground term or a bare word."""
    cell = text.strip()
    if not cell:
        raise IngestError("empty cell")
    if cell.lstrip("-").isdigit():
        return int(cell)
    if cell.startswith('"'):
        try:
            value = json.loads(cell)
        except ValueError as exc:
            raise IngestError(f"malformed string cell {cell!r}") from exc
        if not isinstance(value, str):
            raise IngestError(f"malformed string cell {cell!r}")
        return value
    if "(" in cell:
        return parse_fact(cell)
    return cell


def load_tsv(path: Path) -> List[NestedFact]:
    relation = path.stem
    facts: List[NestedFact] = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            facts.append(NestedFact(relation, tuple(parse_cell(cell) for cell in line.split("\t"))))
        except IngestError as exc:
            raise IngestError(f"{path}:{number}: {exc}") from exc
    return facts


def load_facts(path: Path) -> List[NestedFact]:
    """Read a ``.facts``/``.tsv`` file, or every such file in a directory."""
    path = Path(path)
    if path.is_dir():
        facts: List[NestedFact] = []
        for child in sorted(path.iterdir()):
            if child.suffix in (".facts", ".tsv"):
                facts.extend(load_facts(child))
        return facts
    if not path.exists():
        raise IngestError(f"fact file {path} does not exist")
    if path.suffix == ".tsv":
        return load_tsv(path)
    try:
        return parse_facts(path.read_text(encoding="utf-8"))
    except IngestError as exc:
        raise IngestError(f"{path}: {exc}") from exc


def load_fact_sources(paths: Iterable[Path]) -> List[NestedFact]:
    facts: List[NestedFact] = []
    for path in paths:
        facts.extend(load_facts(Path(path)))
    return facts


def canonical_fact_set(db: Database, relations: Optional[Iterable[str]] = None) -> Set[NestedFact]:
    names = list(relations) if relations is not None else db.relation_names()
    result: Set[NestedFact] = set()
    for name in names:
        result |= db.nested_facts(name)
    return result


def relation_counts(db: Database) -> Mapping[str, int]:
    return {name: db.count(name) for name in db.relation_names()}
