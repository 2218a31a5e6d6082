#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Семейство функций потерь
Кросс-энтропия, обобщённая логит-скорректированная потеря (gLA) в двух
эквивалентных формах, её аналитический градиент и средняя потеря ансамбля
"""

from typing import Sequence, Tuple

import numpy as np
from scipy.special import log_softmax, logsumexp, softmax

from core.errors import InvalidArgumentError
from core.priors import EnsembleSpec


def ce_loss(logits: np.ndarray, target: np.ndarray) -> float:
    """Softmax кросс-энтропия с мягкой целью: -Σ_y t_y log softmax(f)_y

    Args:
        logits: Вектор логитов длины C
        target: Строчно-стохастическая цель длины C

    Returns:
        Неотрицательное значение потерь
    """
    logits = np.asarray(logits, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    return float(-np.sum(target * log_softmax(logits, axis=-1)))


def adjusted_logits(logits: np.ndarray, tau: np.ndarray, log_prior: np.ndarray) -> np.ndarray:
    """Скорректированные логиты f + τ ⊙ log P^train"""
    return np.asarray(logits, dtype=np.float64) + np.asarray(tau, dtype=np.float64) * np.asarray(log_prior)


def gla_loss(logits: np.ndarray, target: np.ndarray, tau: np.ndarray, log_prior: np.ndarray) -> float:
    """Обобщённая логит-скорректированная потеря: CE от f + τ ⊙ log P^train"""
    return ce_loss(adjusted_logits(logits, tau, log_prior), target)


def gla_loss_pairwise(logits: np.ndarray, target: np.ndarray, tau: np.ndarray, log_prior: np.ndarray) -> float:
    """Та же потеря в форме попарных отступов

    ℓ_y = log[1 + Σ_{j≠y} exp(f_j - f_y + Δ_yj)], Δ_yj = τ_j log p_j - τ_y log p_y;
    для мягкой цели берётся Σ_y t_y ℓ_y.
    """
    logits = np.asarray(logits, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    tau = np.broadcast_to(np.asarray(tau, dtype=np.float64), logits.shape)
    adjustment = tau * np.asarray(log_prior, dtype=np.float64)
    margins = adjustment[np.newaxis, :] - adjustment[:, np.newaxis]
    differences = logits[np.newaxis, :] - logits[:, np.newaxis] + margins
    # слагаемое j = y равно exp(0) = 1, поэтому logsumexp по всем j даёт log[1 + Σ_{j≠y} ...]
    per_class = logsumexp(differences, axis=1)
    return float(np.sum(target * per_class))


def gla_grad(logits: np.ndarray, target: np.ndarray, tau: np.ndarray, log_prior: np.ndarray) -> np.ndarray:
    """Градиент gLA по логитам: softmax(f + τ ⊙ log p) - t"""
    return softmax(adjusted_logits(logits, tau, log_prior), axis=-1) - np.asarray(target, dtype=np.float64)


def total_loss(expert_logits: Sequence[np.ndarray], target: np.ndarray, ensemble: EnsembleSpec,
               log_prior: np.ndarray) -> float:
    """Средняя по экспертам gLA-потеря, эксперт λ использует τ = 1 - λ

    Args:
        expert_logits: Логиты каждого эксперта
        target: Мягкая цель
        ensemble: Описание ансамбля
        log_prior: log P^train

    Returns:
        (1/|S_λ|) Σ_λ gla_loss(f^λ, t, 1 - λ, log p)
    """
    if len(expert_logits) != ensemble.num_experts:
        raise InvalidArgumentError(
            f"Число логитов {len(expert_logits)} не совпадает с числом экспертов {ensemble.num_experts}"
        )
    losses = [gla_loss(logits, target, expert.tau, log_prior)
              for logits, expert in zip(expert_logits, ensemble.experts)]
    return float(np.mean(losses))


def mixed_gla_batch(logits: np.ndarray, labels_a: np.ndarray, labels_b: np.ndarray, xi: np.ndarray,
                    tau: np.ndarray, log_prior: np.ndarray) -> Tuple[float, np.ndarray]:
    """Средняя по батчу gLA-потеря для пар mixup и её градиент

    Потеря считается двухчленной суммой ξ·ℓ(y_a) + (1-ξ)·ℓ(y_b), что совпадает
    с кросс-энтропией от мягкой метки.

    Args:
        logits: Логиты эксперта B×C
        labels_a: Первые метки пар
        labels_b: Вторые метки пар
        xi: Коэффициенты смешивания
        tau: τ эксперта
        log_prior: log P^train

    Returns:
        Средняя потеря и градиент по логитам B×C (уже поделённый на B)
    """
    batch_size = logits.shape[0]
    rows = np.arange(batch_size)
    log_probs = log_softmax(adjusted_logits(logits, tau, log_prior), axis=1)
    per_sample = -(xi * log_probs[rows, labels_a] + (1.0 - xi) * log_probs[rows, labels_b])
    grad = np.exp(log_probs)
    grad[rows, labels_a] -= xi
    grad[rows, labels_b] -= 1.0 - xi
    return float(per_sample.mean()), grad / batch_size
