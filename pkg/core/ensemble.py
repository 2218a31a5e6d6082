#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Сбалансированное произведение экспертов
Объединение логитов экспертов в лог-пространстве, апостериорная корректировка
под известное распределение меток и оракульные эксперты для численной проверки
свойств ансамбля
"""

from dataclasses import dataclass
from typing import List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy.special import log_softmax, softmax

from core.errors import InvalidArgumentError
from core.priors import LabelDistribution, LambdaVector, effective_prior, make_ensemble_spec
from services.data_service import GaussianMixture, bayes_log_posterior, log_likelihoods


class ExpertSource(Protocol):
    """Всё, что выдаёт логиты экспертов: обученная модель или оракульный ансамбль"""

    def expert_logits(self, features: np.ndarray) -> List[np.ndarray]:
        ...


@dataclass(frozen=True)
class OracleScorer:
    """Эксперт, удовлетворяющий допущению калибровки по построению

    Обучающий скорер s^λ = log P^train(y|x) берётся из точной апостериорной
    вероятности смеси.
    """

    mixture: GaussianMixture
    lam: LambdaVector


class OracleEnsemble:
    """Ансамбль оракульных экспертов с тем же интерфейсом, что и у модели"""

    def __init__(self, mixture: GaussianMixture, lambdas: Sequence[Union[LambdaVector, float, Sequence[float]]]):
        """Инициализация оракульного ансамбля

        Args:
            mixture: Порождающая смесь обучающих данных
            lambdas: λ экспертов
        """
        self.spec = make_ensemble_spec(list(lambdas), mixture.num_classes)
        self.scorers = [OracleScorer(mixture, lam) for lam in self.spec.experts]
        self.mixture = mixture

    def expert_logits(self, features: np.ndarray) -> List[np.ndarray]:
        return [oracle_expert_logits(scorer, features) for scorer in self.scorers]


def combine(expert_logits: Sequence[np.ndarray]) -> np.ndarray:
    """Среднее логитов экспертов (произведение экспертов в лог-пространстве)

    Args:
        expert_logits: Логиты экспертов одинаковой формы (C или B×C)

    Returns:
        Покомпонентное среднее
    """
    if len(expert_logits) == 0:
        raise InvalidArgumentError("Нельзя объединить пустой список экспертов")
    shapes = {np.shape(logits) for logits in expert_logits}
    if len(shapes) != 1:
        raise InvalidArgumentError(f"Логиты экспертов имеют разные формы: {sorted(shapes)}")
    return np.mean(np.stack([np.asarray(logits, dtype=np.float64) for logits in expert_logits]), axis=0)


def posthoc_adjust(logits: np.ndarray, p_from: LabelDistribution, p_to: LabelDistribution) -> np.ndarray:
    """Замена априорного распределения: f_y + log p_to(y) - log p_from(y)"""
    if p_from.num_classes != p_to.num_classes:
        raise InvalidArgumentError("Распределения для корректировки заданы на разном числе классов")
    return np.asarray(logits, dtype=np.float64) + (p_to.log_probs - p_from.log_probs)


def oracle_expert_logits(scorer: OracleScorer, x: np.ndarray) -> np.ndarray:
    """Логиты оракульного λ-эксперта: f^λ = s^λ - log P^train + λ ⊙ log P^train

    Args:
        scorer: Оракульный эксперт
        x: Точка d или матрица N×d

    Returns:
        Логиты длины C или N×C
    """
    x = np.asarray(x, dtype=np.float64)
    mixture = scorer.mixture
    lam = scorer.lam.expand(mixture.num_classes)
    log_prior = mixture.prior.log_probs
    logits = bayes_log_posterior(mixture, x) - log_prior + lam.values * log_prior
    return logits[0] if x.ndim == 1 else logits


def verify_theorem1(mixture: GaussianMixture, lambdas: Sequence, points: np.ndarray) -> float:
    """Максимальное отклонение апостериорной вероятности ансамбля от P(x|y)P^λ̄(y)

    Args:
        mixture: Порождающая смесь
        lambdas: λ экспертов
        points: Точки N×d

    Returns:
        max |softmax(combine(f^λ(x))) - P^λ̄(y|x)| по всем точкам и классам
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if len(lambdas) == 0 or points.shape[0] == 0:
        raise InvalidArgumentError("Нужны непустые списки λ и точек")
    ensemble = OracleEnsemble(mixture, lambdas)
    ensemble_posterior = softmax(combine(ensemble.expert_logits(points)), axis=1)
    reference_prior = effective_prior(mixture.prior, ensemble.spec)
    reference = softmax(log_likelihoods(mixture, points) + reference_prior.log_probs, axis=1)
    deviation = float(np.max(np.abs(ensemble_posterior - reference)))
    logger.debug(f"Отклонение ансамбля {[lam.to_list() for lam in ensemble.spec.experts]}: {deviation:.3e}")
    return deviation


def combined_logits(source: ExpertSource, features: np.ndarray, p_from: Optional[LabelDistribution] = None,
                    p_to: Optional[LabelDistribution] = None) -> np.ndarray:
    """Объединённые (и при необходимости скорректированные) логиты ансамбля"""
    logits = combine(source.expert_logits(np.atleast_2d(features)))
    if p_to is not None:
        if p_from is None:
            raise InvalidArgumentError("Для корректировки нужно исходное распределение p_from")
        logits = posthoc_adjust(logits, p_from, p_to)
    return logits


def predict(source: ExpertSource, features: np.ndarray, p_from: Optional[LabelDistribution] = None,
            p_to: Optional[LabelDistribution] = None) -> np.ndarray:
    """Предсказание классов: argmax объединённых логитов, ничьи разрешаются к меньшему индексу

    Args:
        source: Модель или оракульный ансамбль
        features: Признаки N×d
        p_from: Распределение, на которое нацелен ансамбль (P^λ̄)
        p_to: Известное тестовое распределение

    Returns:
        Индексы классов длины N
    """
    return np.argmax(combined_logits(source, features, p_from, p_to), axis=1)


def fisher_consistency_disagreements(mixture: GaussianMixture, lambdas: Sequence, points: np.ndarray,
                                     margin: float = 1e-12) -> Tuple[int, int]:
    """Расхождения ансамбля с λ̄ = 0 и байесовского сбалансированного правила

    Точки, где два лучших класса байесовского правила отличаются меньше чем на
    margin в лог-пространстве, исключаются как ничьи.

    Returns:
        Число расхождений и число проверенных точек
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    ensemble = OracleEnsemble(mixture, lambdas)
    predictions = predict(ensemble, points)
    balanced = log_softmax(log_likelihoods(mixture, points), axis=1)
    ordered = np.sort(balanced, axis=1)
    if mixture.num_classes > 1:
        keep = (ordered[:, -1] - ordered[:, -2]) > margin
    else:
        keep = np.ones(points.shape[0], dtype=bool)
    reference = np.argmax(balanced, axis=1)
    disagreements = int(np.sum(predictions[keep] != reference[keep]))
    return disagreements, int(np.sum(keep))
