#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Сервис mixup
Виртуальные примеры как выпуклые комбинации пар входов и их one-hot меток
с коэффициентом ξ ~ Beta(α, α); маргинальное распределение меток сохраняется
"""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from core.config import MixupConfig
from core.errors import InvalidArgumentError


@dataclass(frozen=True)
class MixedBatch:
    """Смешанный батч: признаки, мягкие метки, коэффициенты и исходные пары меток"""

    features: np.ndarray
    soft_labels: np.ndarray
    xi: np.ndarray
    labels_a: np.ndarray
    labels_b: np.ndarray
    partners: np.ndarray


def beta_samples(alpha: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Выборка из Beta(α, α) через два гамма-распределения G1 / (G1 + G2)

    Args:
        alpha: Концентрация α > 0
        size: Число значений
        rng: Генератор

    Returns:
        Массив значений из [0, 1]
    """
    if not alpha > 0:
        raise InvalidArgumentError(f"Параметр Beta должен быть положительным: {alpha}")
    first = rng.standard_gamma(alpha, size)
    second = rng.standard_gamma(alpha, size)
    total = first + second
    degenerate = total == 0.0
    if np.any(degenerate):
        # при очень малом α обе гаммы могут обнулиться; в пределе Beta(α, α) становится монетой на {0, 1}
        first = np.where(degenerate, rng.integers(0, 2, size).astype(np.float64), first)
        total = np.where(degenerate, 1.0, total)
    return first / total


def beta_sample(alpha: float, rng: np.random.Generator) -> float:
    """Одно значение из Beta(α, α)"""
    return float(beta_samples(alpha, 1, rng)[0])


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    encoded = np.zeros((labels.size, num_classes))
    encoded[np.arange(labels.size), labels] = 1.0
    return encoded


def mix_batch(features: np.ndarray, labels: np.ndarray, config: MixupConfig, rng: np.random.Generator,
              num_classes: int, xi: Optional[Union[float, np.ndarray]] = None) -> MixedBatch:
    """Смешивание батча с самим собой по случайной перестановке

    Args:
        features: Признаки B×d
        labels: Метки длины B
        config: Параметры mixup
        rng: Генератор (при выключенном mixup не расходуется)
        num_classes: Число классов
        xi: Принудительные коэффициенты (скаляр или по строкам) вместо выборки из Beta

    Returns:
        MixedBatch с x̃ = ξ x_i + (1-ξ) x_j и ỹ = ξ e_{y_i} + (1-ξ) e_{y_j}
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    batch_size = labels.size
    if batch_size < 1:
        raise InvalidArgumentError("Батч для mixup не может быть пустым")
    if not config.enabled:
        return MixedBatch(features, one_hot(labels, num_classes), np.ones(batch_size), labels, labels,
                          np.arange(batch_size))
    partners = rng.permutation(batch_size)
    if xi is None:
        coefficients = beta_samples(config.alpha, batch_size, rng)
    else:
        coefficients = np.broadcast_to(np.asarray(xi, dtype=np.float64), (batch_size,)).copy()
    weights = coefficients[:, np.newaxis]
    mixed = weights * features + (1.0 - weights) * features[partners]
    soft = weights * one_hot(labels, num_classes) + (1.0 - weights) * one_hot(labels[partners], num_classes)
    return MixedBatch(mixed, soft, coefficients, labels, labels[partners], partners)
