"""End-to-end evolution experiments and their report files.

Every random choice in a run is drawn from a seed derived from
``(master_seed, purpose, generation, slot)``, so a run is a pure function of
its :class:`ExperimentConfig` regardless of the order slots execute in.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .architecture import (
    NetworkArchitecture,
    Verdict,
    ancestor_architecture,
    save_architecture,
    storage_size,
    validate,
)
from .data import Dataset, load_mnist_idx, mnist_paths
from .errors import InsufficientPopulationError, StageError
from .similarity import overlap_matrix
from .synthesis import (
    Alignment,
    AlphaMode,
    AlphaScheme,
    EnvironmentalFactors,
    MatingPolicy,
    synthesize_offspring,
)
from .trainer import TrainConfig, evaluate, train

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1
OVERLAP_CSV = "overlap_by_generation.csv"
ACCURACY_CSV = "accuracy_vs_storage.csv"
MANIFEST = "experiment_manifest.json"
RECORDS = "records.json"

# purpose codes mixed into derived seeds
_INIT, _ANCESTOR_TRAIN, _SELECT, _SYNTH, _TRAIN = range(5)


def derive_seed(master_seed: int, *path: int) -> int:
    """Deterministic 64-bit seed for one purpose/generation/slot coordinate."""
    state = np.random.SeedSequence([int(master_seed), *map(int, path)]).generate_state(
        1, np.uint64
    )
    return int(state[0])


@dataclass(frozen=True)
class ExperimentConfig:
    layer_widths: tuple[int, ...] = (784, 64, 10)
    population_size: int = 10
    generations: int = 7
    policy: MatingPolicy = MatingPolicy()
    env: EnvironmentalFactors = EnvironmentalFactors()
    epochs: int = 3
    batch_size: int = 64
    learning_rate: float = 0.1
    master_seed: int = 0
    data_dir: str = "data/mnist"
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    train_limit: int | None = None
    test_limit: int | None = None
    output_dir: str = "runs/latest"
    save_networks: bool = False

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if self.generations < 1:
            raise ValueError(f"generations must be >= 1, got {self.generations}")
        if self.population_size < self.policy.m:
            raise ValueError(
                f"population_size {self.population_size} is smaller than m={self.policy.m}"
            )
        # fail early on bad training hyperparameters
        self.train_config(0)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(self.epochs, self.batch_size, self.learning_rate, seed)

    def dataset_paths(self) -> dict[str, str]:
        train_i, train_l = mnist_paths(self.data_dir, "train")
        test_i, test_l = mnist_paths(self.data_dir, "test")
        return {
            "train_images": self.train_images or train_i,
            "train_labels": self.train_labels or train_l,
            "test_images": self.test_images or test_i,
            "test_labels": self.test_labels or test_l,
        }

    def to_dict(self) -> dict:
        out = asdict(self)
        out["layer_widths"] = list(self.layer_widths)
        out["policy"] = {
            "alignment": self.policy.alignment.value,
            "m": self.policy.m,
            "alpha": {
                "mode": self.policy.alpha.mode.value,
                "coefficients": (list(self.policy.alpha.coefficients)
                                 if self.policy.alpha.coefficients is not None else None),
            },
        }
        return {"version": CONFIG_VERSION, **out}

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        """Build a config from a config document or an experiment manifest."""
        if "config" in doc and isinstance(doc["config"], dict):
            doc = doc["config"]
        doc = dict(doc)
        version = doc.pop("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ValueError(f"config version {version}, expected {CONFIG_VERSION}")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        if "policy" in doc:
            p = dict(doc["policy"])
            alpha = p.pop("alpha", {}) or {}
            coeffs = alpha.get("coefficients")
            doc["policy"] = MatingPolicy(
                alignment=Alignment.parse(p.get("alignment", "gene_tagged")),
                m=int(p.get("m", 5)),
                alpha=AlphaScheme(
                    AlphaMode(alpha.get("mode", "geometric_mean")),
                    tuple(coeffs) if coeffs is not None else None,
                ),
            )
        if "env" in doc:
            doc["env"] = EnvironmentalFactors(**doc["env"])
        return cls(**doc)

    def with_overrides(self, **changes) -> "ExperimentConfig":
        """Copy with top-level fields, ``alignment``, ``m``, ``r_cluster``, ``r_synapse`` changed."""
        changes = {k: v for k, v in changes.items() if v is not None}
        policy_changes = {k: changes.pop(k) for k in ("alignment", "m") if k in changes}
        env_changes = {k: changes.pop(k) for k in ("r_cluster", "r_synapse") if k in changes}
        policy = self.policy
        if policy_changes:
            if "alignment" in policy_changes:
                policy_changes["alignment"] = Alignment.parse(policy_changes["alignment"])
            policy = replace(policy, **policy_changes)
        env = replace(self.env, **env_changes) if env_changes else self.env
        return replace(self, policy=policy, env=env, **changes)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_dict(json.load(fh))


@dataclass(frozen=True)
class NetworkRecord:
    network_id: str
    parent_ids: tuple[str, ...]
    seed: int
    accuracy: float
    storage_bytes: int
    live_clusters: int
    degenerate: bool


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    networks: tuple[NetworkRecord, ...]
    generation_average_overlap: float = math.nan

    @property
    def network_ids(self) -> list[str]:
        return [n.network_id for n in self.networks]

    def to_dict(self) -> dict:
        return {
            "generation": self.generation,
            "generation_average_overlap": _json_float(self.generation_average_overlap),
            "networks": [
                {**asdict(n), "parent_ids": list(n.parent_ids)} for n in self.networks
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GenerationRecord":
        overlap = doc.get("generation_average_overlap")
        return cls(
            generation=int(doc["generation"]),
            networks=tuple(
                NetworkRecord(**{**n, "parent_ids": tuple(n["parent_ids"])})
                for n in doc["networks"]
            ),
            generation_average_overlap=math.nan if overlap is None else float(overlap),
        )


def _json_float(value: float):
    return None if math.isnan(value) else value


def select_parents(previous: GenerationRecord, m: int, seed: int) -> list[str]:
    """Uniform sample of ``m`` distinct ids from the previous generation."""
    ids = previous.network_ids
    if m > len(ids):
        raise ValueError(f"cannot pick {m} parents from {len(ids)} networks")
    picks = np.random.default_rng(seed).choice(len(ids), size=m, replace=False)
    return [ids[i] for i in picks]


@dataclass
class Datasets:
    train: Dataset
    test: Dataset


def load_datasets(cfg: ExperimentConfig) -> Datasets:
    paths = cfg.dataset_paths()
    try:
        train_set = load_mnist_idx(paths["train_images"], paths["train_labels"])
        test_set = load_mnist_idx(paths["test_images"], paths["test_labels"])
    except (OSError, ValueError) as exc:
        raise StageError("load_mnist_idx", exc) from exc
    if cfg.train_limit is not None:
        train_set = train_set.head(cfg.train_limit)
    if cfg.test_limit is not None:
        test_set = test_set.head(cfg.test_limit)
    return Datasets(train_set, test_set)


def _measure(net, data: Datasets, parent_ids, seed) -> NetworkRecord:
    return NetworkRecord(
        network_id=net.network_id,
        parent_ids=tuple(parent_ids),
        seed=int(seed),
        accuracy=evaluate(net, data.test).accuracy,
        storage_bytes=storage_size(net).bytes,
        live_clusters=net.cluster_count(),
        degenerate=validate(net) is Verdict.DEGENERATE,
    )


def train_ancestor(cfg: ExperimentConfig, data: Datasets) -> NetworkArchitecture:
    try:
        seed = derive_seed(cfg.master_seed, _INIT)
        ancestor = ancestor_architecture(cfg.layer_widths, seed, network_id="g0-n00")
        return train(ancestor, data.train,
                     cfg.train_config(derive_seed(cfg.master_seed, _ANCESTOR_TRAIN))).network
    except Exception as exc:
        raise StageError("train_ancestor", exc) from exc


def ancestor_record(ancestor: NetworkArchitecture, data: Datasets) -> GenerationRecord:
    return GenerationRecord(0, (_measure(ancestor, data, (), ancestor.rng_seed),))


def run_generation(
    previous: GenerationRecord,
    population: Sequence[NetworkArchitecture],
    cfg: ExperimentConfig,
    data: Datasets,
) -> tuple[GenerationRecord, list[NetworkArchitecture]]:
    """Synthesize, train and measure one full generation.

    When the previous generation is the lone ancestor, every parent slot is
    filled with it.
    """
    generation = previous.generation + 1
    by_id = {net.network_id: net for net in population}
    records, offspring = [], []
    for slot in range(cfg.population_size):
        stage = f"generation {generation} slot {slot}"
        if previous.generation == 0:
            parent_ids = [previous.network_ids[0]] * cfg.policy.m
        else:
            parent_ids = select_parents(
                previous, cfg.policy.m, derive_seed(cfg.master_seed, _SELECT, generation, slot)
            )
        seed = derive_seed(cfg.master_seed, _SYNTH, generation, slot)
        try:
            child = synthesize_offspring(
                [by_id[i] for i in parent_ids], cfg.policy, cfg.env, generation, seed,
                network_id=f"g{generation}-n{slot:02d}",
            )
        except Exception as exc:
            raise StageError(f"{stage}: synthesize_offspring", exc) from exc
        try:
            train_seed = derive_seed(cfg.master_seed, _TRAIN, generation, slot)
            child = train(child, data.train, cfg.train_config(train_seed)).network
        except Exception as exc:
            raise StageError(f"{stage}: train", exc) from exc
        try:
            records.append(_measure(child, data, parent_ids, seed))
        except Exception as exc:
            raise StageError(f"{stage}: evaluate", exc) from exc
        offspring.append(child)

    try:
        average = overlap_matrix(offspring).generation_average
    except InsufficientPopulationError as exc:
        logger.warning("generation %d: overlap undefined (%s)", generation, exc)
        average = math.nan
    record = GenerationRecord(generation, tuple(records), average)
    logger.info(
        "generation %d: mean accuracy %.4f, mean storage %.0f B, overlap %.4f",
        generation,
        np.mean([r.accuracy for r in records]),
        np.mean([r.storage_bytes for r in records]),
        average,
    )
    return record, offspring


def run_experiment(
    cfg: ExperimentConfig,
    ancestor: NetworkArchitecture | None = None,
    data: Datasets | None = None,
    write_reports: bool = True,
) -> list[GenerationRecord]:
    """Train (or reuse) the ancestor, evolve ``cfg.generations`` generations, write reports.

    Returns ``generations + 1`` records; index 0 holds the ancestor.
    """
    if data is None:
        data = load_datasets(cfg)
    if ancestor is None:
        ancestor = train_ancestor(cfg, data)
    if cfg.save_networks:
        _save_population(cfg.output_dir, [ancestor])

    records = [ancestor_record(ancestor, data)]
    logger.info("ancestor accuracy %.4f", records[0].networks[0].accuracy)
    population = [ancestor]
    for _ in range(cfg.generations):
        record, population = run_generation(records[-1], population, cfg, data)
        records.append(record)
        if cfg.save_networks:
            _save_population(cfg.output_dir, population)

    if write_reports:
        emit_reports(records, cfg.output_dir, manifest=build_manifest(cfg, records))
    return records


def _save_population(output_dir, population):
    directory = os.path.join(output_dir, "networks")
    os.makedirs(directory, exist_ok=True)
    for net in population:
        save_architecture(net, os.path.join(directory, f"{net.network_id}.json"))


def build_manifest(cfg: ExperimentConfig, records: Sequence[GenerationRecord]) -> dict:
    return {
        "version": CONFIG_VERSION,
        "config": cfg.to_dict(),
        "derived_seeds": {
            "ancestor_init": derive_seed(cfg.master_seed, _INIT),
            "ancestor_train": derive_seed(cfg.master_seed, _ANCESTOR_TRAIN),
            "offspring": [
                {"generation": r.generation, "network_id": n.network_id, "synthesis": n.seed,
                 "train": derive_seed(cfg.master_seed, _TRAIN, r.generation, slot)}
                for r in records[1:] for slot, n in enumerate(r.networks)
            ],
        },
    }


def _fmt(value: float) -> str:
    return "nan" if math.isnan(value) else f"{value:.6f}"


def overlap_csv(records: Sequence[GenerationRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["generation", "average_overlap"])
    for r in records:
        if r.generation > 0:
            writer.writerow([r.generation, _fmt(r.generation_average_overlap)])
    return buf.getvalue()


def accuracy_csv(records: Sequence[GenerationRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["generation", "network_id", "storage_bytes", "accuracy", "degenerate"])
    for r in records:
        for n in r.networks:
            writer.writerow([r.generation, n.network_id, n.storage_bytes, _fmt(n.accuracy),
                             str(n.degenerate).lower()])
    return buf.getvalue()


def emit_reports(records: Sequence[GenerationRecord], output_dir, manifest: dict | None = None):
    """Write the overlap and accuracy CSVs, the records file and (if given) the manifest."""
    if not records:
        raise ValueError("no records to report")
    try:
        os.makedirs(output_dir, exist_ok=True)
        files = {
            OVERLAP_CSV: overlap_csv(records),
            ACCURACY_CSV: accuracy_csv(records),
            RECORDS: json.dumps([r.to_dict() for r in records], indent=1) + "\n",
        }
        if manifest is not None:
            files[MANIFEST] = json.dumps(manifest, indent=1) + "\n"
        for name, text in files.items():
            with open(os.path.join(output_dir, name), "w", newline="") as fh:
                fh.write(text)
    except OSError as exc:
        raise StageError("emit_reports", exc) from exc
    return {name: os.path.join(output_dir, name) for name in files}


def load_records(path) -> list[GenerationRecord]:
    with open(path) as fh:
        return [GenerationRecord.from_dict(d) for d in json.load(fh)]
