#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Метрики качества и калибровки
Сбалансированная ошибка, точность по группам, ECE/MCE по равным интервалам
уверенности, ожидаемое маргинальное распределение и KL-диагностика
"""

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from core.errors import InvalidArgumentError
from core.priors import LabelDistribution

# Число интервалов уверенности по умолчанию
DEFAULT_BINS = 15


@dataclass(frozen=True)
class ReliabilityBins:
    """Равные интервалы уверенности (0, 1] и статистика по каждому"""

    edges: np.ndarray
    counts: np.ndarray
    accuracy: np.ndarray
    confidence: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def gaps(self) -> np.ndarray:
        return np.abs(self.accuracy - self.confidence)

    def ece(self) -> float:
        """Взвешенное среднее |acc - conf|; пустые интервалы дают 0"""
        if self.total == 0:
            return 0.0
        return float(np.sum(self.counts / self.total * self.gaps()))

    def mce(self) -> float:
        """Максимум |acc - conf| по непустым интервалам"""
        occupied = self.counts > 0
        if not np.any(occupied):
            return 0.0
        return float(np.max(self.gaps()[occupied]))

    def rows(self) -> List[Dict[str, float]]:
        """Строки для CSV: bin_low, bin_high, count, accuracy, confidence"""
        return [
            {"bin_low": float(self.edges[i]), "bin_high": float(self.edges[i + 1]), "count": int(self.counts[i]),
             "accuracy": float(self.accuracy[i]), "confidence": float(self.confidence[i])}
            for i in range(self.counts.size)
        ]

    def to_dict(self) -> Dict[str, list]:
        return {"edges": self.edges.tolist(), "counts": self.counts.tolist(),
                "accuracy": self.accuracy.tolist(), "confidence": self.confidence.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, list]) -> "ReliabilityBins":
        return cls(np.asarray(data["edges"]), np.asarray(data["counts"], dtype=np.int64),
                   np.asarray(data["accuracy"]), np.asarray(data["confidence"]))


def balanced_error(predictions: np.ndarray, labels: np.ndarray, num_classes: int) -> float:
    """Сбалансированная ошибка: среднее по присутствующим классам долей ошибок

    Args:
        predictions: Предсказанные классы
        labels: Истинные метки
        num_classes: Число классов C

    Returns:
        Значение из [0, 1]
    """
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if labels.size == 0:
        raise InvalidArgumentError("Нельзя вычислить сбалансированную ошибку по пустой выборке")
    if predictions.shape != labels.shape:
        raise InvalidArgumentError("Формы предсказаний и меток различаются")
    errors = []
    for label in range(num_classes):
        members = labels == label
        if np.any(members):
            errors.append(np.mean(predictions[members] != label))
    return float(np.mean(errors))


def accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        raise InvalidArgumentError("Нельзя вычислить точность по пустой выборке")
    return float(np.mean(np.asarray(predictions) == labels))


def group_accuracy(predictions: np.ndarray, labels: np.ndarray, groups: Dict[str, tuple]) -> Dict[str, Optional[float]]:
    """Точность по группам классов; группа без тестовых примеров даёт None"""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    result: Dict[str, Optional[float]] = {}
    for name, classes in groups.items():
        members = np.isin(labels, np.asarray(classes, dtype=np.int64))
        result[name] = float(np.mean(predictions[members] == labels[members])) if np.any(members) else None
    return result


def reliability(confidences: np.ndarray, correct: np.ndarray, bins: int = DEFAULT_BINS) -> ReliabilityBins:
    """Разбиение предсказаний по интервалам уверенности ((0, 1/M], ..., ((M-1)/M, 1])

    Args:
        confidences: Уверенности из [0, 1]
        correct: Флаги правильности
        bins: Число интервалов M

    Returns:
        ReliabilityBins, из которых ECE и MCE выводятся точно
    """
    if bins < 1:
        raise InvalidArgumentError(f"Число интервалов должно быть положительным: {bins}")
    confidences = np.asarray(confidences, dtype=np.float64).reshape(-1)
    correct = np.asarray(correct, dtype=np.float64).reshape(-1)
    if confidences.shape != correct.shape:
        raise InvalidArgumentError("Длины уверенностей и флагов правильности различаются")
    if np.any((confidences < 0.0) | (confidences > 1.0)):
        raise InvalidArgumentError("Уверенности должны лежать в [0, 1]")
    edges = np.linspace(0.0, 1.0, bins + 1)
    # правый конец интервала включается; нулевая уверенность попадает в первый интервал
    assignment = np.clip(np.searchsorted(edges[1:], confidences, side="left"), 0, bins - 1)
    counts = np.bincount(assignment, minlength=bins)
    occupied = np.maximum(counts, 1)
    accuracy_per_bin = np.bincount(assignment, weights=correct, minlength=bins) / occupied
    confidence_per_bin = np.bincount(assignment, weights=confidences, minlength=bins) / occupied
    return ReliabilityBins(edges, counts.astype(np.int64), accuracy_per_bin, confidence_per_bin)


def ece(confidences: np.ndarray, correct: np.ndarray, bins: int = DEFAULT_BINS) -> float:
    """Ожидаемая ошибка калибровки"""
    return reliability(confidences, correct, bins).ece()


def mce(confidences: np.ndarray, correct: np.ndarray, bins: int = DEFAULT_BINS) -> float:
    """Максимальная ошибка калибровки"""
    return reliability(confidences, correct, bins).mce()


def expected_marginal(posteriors: np.ndarray) -> LabelDistribution:
    """Ожидаемое маргинальное распределение: среднее апостериорных по выборке"""
    posteriors = np.atleast_2d(np.asarray(posteriors, dtype=np.float64))
    if posteriors.shape[0] == 0:
        raise InvalidArgumentError("Нельзя усреднить пустую матрицу апостериорных")
    return LabelDistribution.from_weights(posteriors.mean(axis=0))


def kl_divergence(p, q) -> float:
    """KL(p || q) = Σ p log(p/q) с соглашением 0·log 0 = 0

    Args:
        p: Распределение (LabelDistribution или вектор)
        q: Распределение, положительное везде, где p > 0

    Returns:
        Неотрицательное значение
    """
    p = p.probs if isinstance(p, LabelDistribution) else np.asarray(p, dtype=np.float64)
    q = q.probs if isinstance(q, LabelDistribution) else np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise InvalidArgumentError("Распределения заданы на разном числе классов")
    support = p > 0
    if np.any(q[support] <= 0):
        raise InvalidArgumentError("q должно быть положительным на носителе p")
    return float(max(np.sum(p[support] * (np.log(p[support]) - np.log(q[support]))), 0.0))
