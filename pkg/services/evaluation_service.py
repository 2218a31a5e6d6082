#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Сервис оценки
Протокол оценки ансамбля: сбалансированная тестовая выборка, группы классов,
калибровка, диагностика маргинальных распределений экспертов и точность
на сдвинутых тестовых распределениях с корректировкой и без
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.special import softmax

from core.config import EvalConfig
from core.ensemble import ExpertSource, combine, posthoc_adjust
from core.errors import InvalidArgumentError
from core.metrics import (accuracy, balanced_error, expected_marginal, group_accuracy, kl_divergence,
                          reliability)
from core.priors import EnsembleSpec, LabelDistribution, effective_prior, exponent_for_target, lambda_prior
from core.rng import derive_seed
from services.data_service import (Dataset, bayes_balanced_classifier, bayes_posterior, group_partition,
                                   resample_shifted, shifted_targets)


@dataclass
class ShiftedResult:
    """Точность на одном сдвинутом тестовом распределении"""

    name: str
    target: List[float]
    size: int
    accuracy: float
    adjusted_accuracy: Optional[float]
    bayes_accuracy: Optional[float] = None
    # Покомпонентный λ, при котором P^λ совпадает с целевым распределением
    required_lambda: Optional[List[float]] = None


@dataclass
class EvalReport:
    """Сводный отчёт оценки"""

    accuracy: float
    balanced_error: float
    group_accuracy: Dict[str, Optional[float]]
    ece: float
    mce: float
    reliability: Dict[str, list]
    expert_ece: List[float]
    expected_marginal: List[float]
    kl: Dict[str, float]
    shifted: List[ShiftedResult] = field(default_factory=list)
    bayes_balanced_error: Optional[float] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "accuracy": self.accuracy,
            "balanced_error": self.balanced_error,
            "group_accuracy": self.group_accuracy,
            "ece": self.ece,
            "mce": self.mce,
            "reliability": self.reliability,
            "expert_ece": self.expert_ece,
            "expected_marginal": self.expected_marginal,
            "kl": self.kl,
            "shifted": [vars(result) for result in self.shifted],
            "bayes_balanced_error": self.bayes_balanced_error,
            "metadata": self.metadata,
        }


def _max_confidence(posteriors: np.ndarray, labels: np.ndarray, bins: int):
    predictions = np.argmax(posteriors, axis=1)
    return reliability(posteriors.max(axis=1), predictions == labels, bins)


def evaluate(source: ExpertSource, test: Dataset, train_prior: LabelDistribution, ensemble: EnsembleSpec,
             config: EvalConfig, seed: int, train_counts: Optional[Sequence[int]] = None) -> EvalReport:
    """Полный протокол оценки ансамбля

    Args:
        source: Обученная модель или оракульный ансамбль
        test: Сбалансированная тестовая выборка
        train_prior: P^train
        ensemble: Описание ансамбля (λ экспертов и λ̄)
        config: Параметры оценки (сдвиги, известный prior, число интервалов)
        seed: Сид перевыборки сдвинутых наборов
        train_counts: Счётчики обучающих классов для групп many/medium/few

    Returns:
        EvalReport
    """
    # Предсказания и калибровка ансамбля на сбалансированной выборке
    expert_logits = source.expert_logits(test.features)
    posteriors = softmax(combine(expert_logits), axis=1)
    predictions = np.argmax(posteriors, axis=1)
    bins = _max_confidence(posteriors, test.labels, config.bins)

    # Группы many/medium/few по обучающим счётчикам
    counts = np.asarray(train_counts) if train_counts is not None else np.round(train_prior.probs * test.size)
    groups = group_partition(counts).as_dict()

    # Диагностика: маргинальные распределения ансамбля и экспертов против их целевых P^λ
    ensemble_prior = effective_prior(train_prior, ensemble)
    marginal = expected_marginal(posteriors)
    kl = {"ensemble": kl_divergence(ensemble_prior, marginal)}
    expert_ece = []
    for index, (logits, expert) in enumerate(zip(expert_logits, ensemble.experts)):
        expert_posteriors = softmax(logits, axis=1)
        expert_ece.append(_max_confidence(expert_posteriors, test.labels, config.bins).ece())
        kl[f"expert{index}"] = kl_divergence(lambda_prior(train_prior, expert), expected_marginal(expert_posteriors))

    report = EvalReport(
        accuracy=accuracy(predictions, test.labels),
        balanced_error=balanced_error(predictions, test.labels, test.num_classes),
        group_accuracy=group_accuracy(predictions, test.labels, groups),
        ece=bins.ece(),
        mce=bins.mce(),
        reliability=bins.to_dict(),
        expert_ece=expert_ece,
        expected_marginal=marginal.probs.tolist(),
        kl=kl,
    )
    if test.mixture is not None:
        bayes_predictions = bayes_balanced_classifier(test.mixture, test.features)
        report.bayes_balanced_error = balanced_error(bayes_predictions, test.labels, test.num_classes)

    # Сдвинутые тестовые распределения от прямого длинного хвоста до обратного
    for index, (name, target) in enumerate(shifted_targets(test.num_classes, config.shifted_irs)):
        report.shifted.append(_evaluate_shifted(source, test, name, target, train_prior, ensemble_prior, config,
                                                derive_seed(seed, index)))
    logger.info(f"Оценка: точность {report.accuracy:.4f}, BER {report.balanced_error:.4f}, ECE {report.ece:.4f}")
    return report


def _evaluate_shifted(source: ExpertSource, test: Dataset, name: str, target: LabelDistribution,
                      train_prior: LabelDistribution, ensemble_prior: LabelDistribution, config: EvalConfig,
                      seed: int) -> ShiftedResult:
    shifted = resample_shifted(test, target, seed)
    logits = combine(source.expert_logits(shifted.features))
    unadjusted = accuracy(np.argmax(logits, axis=1), shifted.labels)
    adjusted = None
    if config.known_prior:
        adjusted_logits = posthoc_adjust(logits, ensemble_prior, target)
        adjusted = accuracy(np.argmax(adjusted_logits, axis=1), shifted.labels)
    bayes = None
    if shifted.mixture is not None:
        bayes_predictions = np.argmax(bayes_posterior(shifted.mixture, shifted.features, target), axis=1)
        bayes = accuracy(bayes_predictions, shifted.labels)
    absent = np.flatnonzero(shifted.counts == 0)
    if absent.size:
        logger.warning(f"В сдвинутом наборе {name} отсутствуют классы {absent.tolist()}")
    return ShiftedResult(name=name, target=target.probs.tolist(), size=shifted.size, accuracy=unadjusted,
                         adjusted_accuracy=adjusted, bayes_accuracy=bayes,
                         required_lambda=required_lambda(train_prior, target))


def required_lambda(train_prior: LabelDistribution, target: LabelDistribution) -> Optional[List[float]]:
    """λ, переводящий P^train в целевое распределение; None, если такого λ нет в допустимом диапазоне"""
    try:
        return exponent_for_target(train_prior, target).to_list()
    except InvalidArgumentError as e:
        logger.debug(f"Показатель для целевого распределения не найден: {e}")
        return None


def shifted_summary(report: EvalReport) -> List[Tuple[str, float, Optional[float]]]:
    """Краткая сводка по сдвинутым распределениям для журнала"""
    return [(result.name, result.accuracy, result.adjusted_accuracy) for result in report.shifted]
