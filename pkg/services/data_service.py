#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Сервис данных
Синтетические длиннохвостые смеси гауссиан с точными байесовскими апостериорными
вероятностями, загрузка внешних наборов, перевыборка тестовых данных
под сдвинутые распределения меток
"""

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.special import log_softmax, softmax

from core.errors import ArtifactIOError, InvalidArgumentError
from core.priors import LabelDistribution, lt_exponential_prior
from core.rng import RNG_ALGORITHM, make_rng, spawn_seeds

# Размер части при генерации: разбиение зависит только от N, а не от числа потоков
CHUNK_SIZE = 65536

# Пороги групп many / medium / few по числу обучающих примеров
MANY_SHOT_MIN = 101
FEW_SHOT_MAX = 19


@dataclass(frozen=True)
class GaussianMixture:
    """Смесь изотропных гауссиан с общей σ и априорным распределением меток"""

    means: np.ndarray
    sigma: float
    prior: LabelDistribution

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        if means.shape[0] != self.prior.num_classes:
            raise InvalidArgumentError(
                f"Число центров {means.shape[0]} не совпадает с числом классов {self.prior.num_classes}"
            )
        if not self.sigma > 0:
            raise InvalidArgumentError(f"σ должна быть положительной: {self.sigma}")
        if means.shape[0] > 1:
            distances = np.linalg.norm(means[:, np.newaxis, :] - means[np.newaxis, :, :], axis=2)
            np.fill_diagonal(distances, np.inf)
            if np.min(distances) == 0.0:
                raise InvalidArgumentError("Центры классов должны быть попарно различны")
        means.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def num_classes(self) -> int:
        return int(self.means.shape[0])

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    def with_prior(self, prior: LabelDistribution) -> "GaussianMixture":
        """Та же смесь при другом распределении меток (сдвиг меток, P(x|y) неизменно)"""
        return GaussianMixture(self.means, self.sigma, prior)

    def to_dict(self) -> Dict[str, Any]:
        return {"means": self.means.tolist(), "sigma": self.sigma, "prior": self.prior.probs.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GaussianMixture":
        return cls(np.asarray(data["means"]), float(data["sigma"]), LabelDistribution(np.asarray(data["prior"])))


@dataclass(frozen=True)
class Dataset:
    """Выборка: признаки N×d, метки из [0, C) и счётчики классов n_j"""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    mixture: Optional[GaussianMixture] = None
    meta: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if features.shape[0] != labels.shape[0]:
            raise InvalidArgumentError(f"Число строк признаков {features.shape[0]} и меток {labels.shape[0]} различается")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise InvalidArgumentError(f"Метки должны лежать в [0, {self.num_classes})")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    @property
    def size(self) -> int:
        return int(self.labels.size)

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def empirical_prior(self) -> LabelDistribution:
        """Эмпирическое распределение меток со сглаживанием нулевых классов"""
        return LabelDistribution.from_weights(self.counts)

    def subset(self, indices: np.ndarray, meta: Optional[Dict[str, Any]] = None) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices], self.num_classes, self.mixture, meta or {})

    def __len__(self) -> int:
        return self.size


@dataclass(frozen=True)
class GroupPartition:
    """Разбиение классов на many / medium / few"""

    many: Tuple[int, ...]
    medium: Tuple[int, ...]
    few: Tuple[int, ...]

    def as_dict(self) -> Dict[str, Tuple[int, ...]]:
        return {"many": self.many, "medium": self.medium, "few": self.few}


def circle_mixture(prior: LabelDistribution, radius: float = 2.5, sigma: float = 1.0, dim: int = 2) -> GaussianMixture:
    """Смесь с центрами, равномерно расставленными по окружности в первых двух координатах"""
    if dim < 2:
        raise InvalidArgumentError("Для круговой смеси нужна размерность не меньше 2")
    angles = 2.0 * np.pi * np.arange(prior.num_classes) / prior.num_classes
    means = np.zeros((prior.num_classes, dim))
    means[:, 0] = radius * np.cos(angles)
    means[:, 1] = radius * np.sin(angles)
    return GaussianMixture(means, sigma, prior)


def random_mixture(prior: LabelDistribution, dim: int, scale: float = 2.5, sigma: float = 1.0,
                   seed: int = 0) -> GaussianMixture:
    """Смесь со случайными гауссовскими центрами масштаба scale"""
    rng = make_rng(seed)
    means = scale * rng.standard_normal((prior.num_classes, dim))
    return GaussianMixture(means, sigma, prior)


def _sample_chunk(mix: GaussianMixture, size: int, seed_sequence: np.random.SeedSequence) -> Tuple[np.ndarray, np.ndarray]:
    rng = np.random.Generator(np.random.PCG64(seed_sequence))
    labels = rng.choice(mix.num_classes, size=size, p=mix.prior.probs)
    features = mix.means[labels] + mix.sigma * rng.standard_normal((size, mix.dim))
    return features, labels


def sample_dataset(mix: GaussianMixture, n_samples: int, seed: int, workers: int = 1) -> Dataset:
    """Выборка i.i.d. из смеси

    Args:
        mix: Порождающая смесь
        n_samples: Размер выборки N
        seed: Сид
        workers: Число потоков; результат от него не зависит

    Returns:
        Набор данных, хранящий порождающую смесь для оракулов
    """
    if n_samples < 1:
        raise InvalidArgumentError(f"Размер выборки должен быть положительным: {n_samples}")
    # Выборка режется на блоки фиксированного размера, у каждого блока свой подпоток сида
    sizes = [min(CHUNK_SIZE, n_samples - start) for start in range(0, n_samples, CHUNK_SIZE)]
    seeds = spawn_seeds(seed, len(sizes))
    jobs = list(zip(sizes, seeds))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda job: _sample_chunk(mix, *job), jobs))
    else:
        chunks = [_sample_chunk(mix, size, sequence) for size, sequence in jobs]
    # Склейка блоков в исходном порядке
    features = np.concatenate([chunk[0] for chunk in chunks])
    labels = np.concatenate([chunk[1] for chunk in chunks])
    meta = {"generator": {"mixture": mix.to_dict(), "chunk_size": CHUNK_SIZE},
            "rng": {"algorithm": RNG_ALGORITHM, "seed": int(seed)}}
    dataset = Dataset(features, labels, mix.num_classes, mix, meta)
    logger.info(f"Сгенерирована выборка из {n_samples} примеров, классы: {dataset.counts.tolist()}")
    return dataset


def sample_balanced(mix: GaussianMixture, per_class: int, seed: int) -> Dataset:
    """Сбалансированная выборка: ровно per_class примеров каждого класса"""
    rng = make_rng(seed)
    labels = np.repeat(np.arange(mix.num_classes), per_class)
    features = mix.means[labels] + mix.sigma * rng.standard_normal((labels.size, mix.dim))
    meta = {"generator": {"mixture": mix.to_dict(), "per_class": per_class},
            "rng": {"algorithm": RNG_ALGORITHM, "seed": int(seed)}}
    return Dataset(features, labels, mix.num_classes, mix, meta)


def log_likelihoods(mix: GaussianMixture, features: np.ndarray) -> np.ndarray:
    """log N(x; μ_y, σ²I) для каждой точки и класса, форма N×C"""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    squared = np.sum((features[:, np.newaxis, :] - mix.means[np.newaxis, :, :]) ** 2, axis=2)
    normalizer = mix.dim * np.log(mix.sigma * np.sqrt(2.0 * np.pi))
    return -squared / (2.0 * mix.sigma ** 2) - normalizer


def bayes_log_posterior(mix: GaussianMixture, features: np.ndarray,
                        prior_override: Optional[LabelDistribution] = None) -> np.ndarray:
    """log P(y|x) ∝ log P(x|y) + log P(y), нормированный по y"""
    prior = prior_override if prior_override is not None else mix.prior
    if prior.num_classes != mix.num_classes:
        raise InvalidArgumentError("Распределение меток задано на другом числе классов")
    return log_softmax(log_likelihoods(mix, features) + prior.log_probs, axis=1)


def bayes_posterior(mix: GaussianMixture, x: np.ndarray,
                    prior_override: Optional[LabelDistribution] = None) -> np.ndarray:
    """Точная апостериорная вероятность смеси

    Args:
        mix: Смесь
        x: Точка d или матрица точек N×d
        prior_override: Распределение меток вместо mix.prior

    Returns:
        Вектор длины C для одной точки или матрица N×C
    """
    x = np.asarray(x, dtype=np.float64)
    prior = prior_override if prior_override is not None else mix.prior
    posterior = softmax(log_likelihoods(mix, x) + prior.log_probs, axis=1)
    return posterior[0] if x.ndim == 1 else posterior


def bayes_balanced_classifier(mix: GaussianMixture, x: np.ndarray) -> np.ndarray:
    """Байес-оптимальное правило для сбалансированной ошибки: argmax_y P(x|y)

    Ничьи разрешаются в пользу наименьшего индекса класса.
    """
    x = np.asarray(x, dtype=np.float64)
    predictions = np.argmax(log_likelihoods(mix, x), axis=1)
    return int(predictions[0]) if x.ndim == 1 else predictions


def resample_shifted(test: Dataset, target: LabelDistribution, seed: int) -> Dataset:
    """Подвыборка без возвращения с числами классов, пропорциональными target

    Args:
        test: Исходная тестовая выборка
        target: Целевое распределение меток
        seed: Сид выбора примеров

    Returns:
        Подмножество test максимального размера с n_c ∝ target_c
    """
    if target.num_classes != test.num_classes:
        raise InvalidArgumentError("Целевое распределение задано на другом числе классов")
    available = test.counts
    empty = np.flatnonzero(available == 0)
    if empty.size:
        raise InvalidArgumentError(f"Классы {empty.tolist()} имеют целевую массу, но отсутствуют в тестовой выборке")
    scale = np.min(available / target.probs)
    # малый допуск, чтобы округление вниз не теряло пример на точных кратных
    wanted = np.minimum(np.floor(scale * target.probs + 1e-9).astype(np.int64), available)
    rng = make_rng(seed)
    selected = []
    for label in range(test.num_classes):
        members = np.flatnonzero(test.labels == label)
        selected.append(members[rng.permutation(members.size)[:wanted[label]]])
    indices = np.sort(np.concatenate(selected))
    meta = {"resampling": {"rule": "per-class proportional subsampling without replacement",
                           "target": target.probs.tolist(), "counts": wanted.tolist(), "seed": int(seed)}}
    logger.debug(f"Перевыборка: {indices.size} из {test.size} примеров, классы {wanted.tolist()}")
    return test.subset(indices, meta)


def shifted_targets(num_classes: int, irs: List[float]) -> List[Tuple[str, LabelDistribution]]:
    """Прямые и обратные длиннохвостые тестовые распределения и равномерное

    Args:
        num_classes: Число классов
        irs: Коэффициенты дисбаланса

    Returns:
        Список пар (имя, распределение): forward{ir}..., uniform, backward{ir}...
    """
    forward = [(f"forward{ir:g}", lt_exponential_prior(num_classes, ir)) for ir in sorted(irs, reverse=True)]
    backward = [(f"backward{ir:g}", lt_exponential_prior(num_classes, ir).reversed()) for ir in sorted(irs)]
    return forward + [("uniform", LabelDistribution.uniform(num_classes))] + backward


def group_partition(counts: np.ndarray) -> GroupPartition:
    """Разбиение классов по числу примеров: many (> 100), medium (20..100), few (< 20)"""
    counts = np.asarray(counts)
    if np.any(counts < 0):
        raise InvalidArgumentError("Счётчики классов должны быть неотрицательными")
    many = tuple(int(i) for i in np.flatnonzero(counts >= MANY_SHOT_MIN))
    few = tuple(int(i) for i in np.flatnonzero(counts <= FEW_SHOT_MAX))
    medium = tuple(int(i) for i in np.flatnonzero((counts > FEW_SHOT_MAX) & (counts < MANY_SHOT_MIN)))
    return GroupPartition(many=many, medium=medium, few=few)


def save_dataset(dataset: Dataset, directory: Path, extra_meta: Optional[Dict[str, Any]] = None):
    """Запись набора в data.csv (f1..fd,label) и meta.json

    Args:
        dataset: Набор данных
        directory: Каталог назначения
        extra_meta: Дополнительные метаданные (хеш конфигурации, сид, переопределения)
    """
    directory = Path(directory)
    data_path = directory / "data.csv"
    meta_path = directory / "meta.json"
    try:
        directory.mkdir(parents=True, exist_ok=True)
        with open(data_path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow([f"f{i + 1}" for i in range(dataset.dim)] + ["label"])
            for row, label in zip(dataset.features.tolist(), dataset.labels.tolist()):
                writer.writerow([repr(value) for value in row] + [label])
        meta = {"num_classes": dataset.num_classes, "dim": dataset.dim, "size": dataset.size,
                "counts": dataset.counts.tolist(), **dataset.meta, **(extra_meta or {})}
        if dataset.mixture is not None:
            meta["mixture"] = dataset.mixture.to_dict()
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as e:
        raise ArtifactIOError(f"Не удалось записать набор данных: {e}", str(directory)) from e
    logger.info(f"Набор данных записан в {directory}")


def load_dataset(directory: Path) -> Dataset:
    """Чтение набора из data.csv и meta.json с проверкой счётчиков

    Args:
        directory: Каталог с data.csv и meta.json

    Returns:
        Набор данных; смесь восстанавливается, если она записана в meta.json
    """
    directory = Path(directory)
    data_path = directory / "data.csv"
    meta_path = directory / "meta.json"
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        with open(data_path, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            header = next(reader)
            rows = [row for row in reader if row]
    except (OSError, StopIteration, json.JSONDecodeError) as e:
        raise ArtifactIOError(f"Не удалось прочитать набор данных: {e}", str(directory)) from e

    # Разбор строк и полей meta.json; любая порча файла превращается в ошибку артефакта
    try:
        dim = len(header) - 1
        if dim != meta["dim"]:
            raise ArtifactIOError(f"Число столбцов признаков {dim} не совпадает с meta.json ({meta['dim']})",
                                  str(data_path))
        if any(len(row) != dim + 1 for row in rows):
            raise ArtifactIOError(f"Строки {data_path} должны содержать {dim + 1} столбцов", str(data_path))
        features = np.asarray([[float(value) for value in row[:dim]] for row in rows],
                              dtype=np.float64).reshape(-1, dim)
        labels = np.asarray([int(row[dim]) for row in rows], dtype=np.int64)
        num_classes = int(meta["num_classes"])
        expected_counts = [int(count) for count in meta["counts"]]
        mixture = GaussianMixture.from_dict(meta["mixture"]) if "mixture" in meta else None
    except (KeyError, TypeError, ValueError) as e:
        raise ArtifactIOError(f"Повреждённый набор данных: {e!r}", str(directory)) from e

    # Метки и счётчики проверяются уже на собранном наборе
    dataset = Dataset(features, labels, num_classes, mixture, meta)
    if dataset.counts.tolist() != expected_counts:
        raise InvalidArgumentError(f"Счётчики классов в {data_path} не совпадают с meta.json")
    logger.info(f"Набор данных загружен из {directory}: {dataset.size} примеров")
    return dataset
