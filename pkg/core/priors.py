#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Распределения меток и семейство целевых распределений
Отвечает за длиннохвостые профили, λ-параметризацию априорных распределений,
матрицы попарных отступов и описание ансамбля экспертов
"""

import json
from dataclasses import dataclass, field
from typing import List, Sequence, Union

import numpy as np
from loguru import logger
from scipy.special import softmax

from core.errors import InvalidArgumentError, NumericRangeError

# Аддитивное сглаживание для эмпирических частот, чтобы все логарифмы были конечны
SMOOTHING_EPS = 1e-12

# Допуск на сумму вероятностей
SUM_TOLERANCE = 1e-12

ArrayLike = Union[Sequence[float], np.ndarray]


@dataclass(frozen=True)
class LabelDistribution:
    """Вероятностный вектор над C классами (P^train, P^test, P^λ, P^bal)"""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64).copy()
        if probs.ndim != 1 or probs.size == 0:
            raise InvalidArgumentError(f"Ожидался непустой вектор вероятностей, получена форма {probs.shape}")
        if not np.all(np.isfinite(probs)):
            raise InvalidArgumentError("Вектор вероятностей содержит нечисловые значения")
        if np.any(probs <= 0.0):
            raise InvalidArgumentError("Все вероятности должны быть строго положительны")
        if abs(probs.sum() - 1.0) > SUM_TOLERANCE:
            raise InvalidArgumentError(f"Сумма вероятностей {probs.sum():.17g} отличается от 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def num_classes(self) -> int:
        return int(self.probs.size)

    @property
    def log_probs(self) -> np.ndarray:
        return np.log(self.probs)

    @classmethod
    def uniform(cls, num_classes: int) -> "LabelDistribution":
        """Сбалансированное распределение P^bal = 1/C"""
        if num_classes < 1:
            raise InvalidArgumentError(f"Число классов должно быть положительным: {num_classes}")
        return cls(np.full(num_classes, 1.0 / num_classes))

    @classmethod
    def from_weights(cls, weights: ArrayLike, eps: float = SMOOTHING_EPS) -> "LabelDistribution":
        """Нормировка неотрицательных весов (например, счётчиков n_j) со сглаживанием

        Args:
            weights: Неотрицательные веса классов
            eps: Аддитивное сглаживание n_j + eps

        Returns:
            Нормированное распределение
        """
        weights = np.asarray(weights, dtype=np.float64)
        if weights.ndim != 1 or weights.size == 0:
            raise InvalidArgumentError("Веса классов должны быть непустым вектором")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise InvalidArgumentError("Веса классов должны быть конечными и неотрицательными")
        smoothed = weights + eps
        return cls._normalized(smoothed / smoothed.sum())

    @classmethod
    def from_log_weights(cls, log_weights: ArrayLike) -> "LabelDistribution":
        """Нормировка в лог-пространстве со сдвигом на максимум"""
        log_weights = np.asarray(log_weights, dtype=np.float64)
        if not np.all(np.isfinite(log_weights)):
            raise NumericRangeError("Логарифмы весов вышли за пределы представимых значений")
        probs = softmax(log_weights)
        if np.any(probs <= 0.0):
            raise NumericRangeError("Показатель степени слишком велик: вероятность обратилась в ноль")
        return cls._normalized(probs)

    @classmethod
    def _normalized(cls, probs: np.ndarray) -> "LabelDistribution":
        # повторная нормировка убирает накопленную ошибку округления суммы
        return cls(probs / probs.sum())

    @classmethod
    def from_json(cls, text: str) -> "LabelDistribution":
        return cls(np.asarray(json.loads(text), dtype=np.float64))

    def to_json(self) -> str:
        return json.dumps(self.probs.tolist())

    def reversed(self) -> "LabelDistribution":
        """Обратный профиль: порядок классов переворачивается"""
        return LabelDistribution(self.probs[::-1])

    def __len__(self) -> int:
        return self.num_classes


# Наибольший модуль λ, при котором 1 - λ ещё можно сделать точным
MAX_LAMBDA_MAGNITUDE = 2.0 ** 50


def exact_complement(values: np.ndarray) -> tuple:
    """Пара (x, 1 - x), в которой вычитание из единицы точно

    Компоненты, для которых 1 - x округляется, сдвигаются к ближайшему узлу
    сетки 2^(e-51), где e - двоичный порядок max(|x|, 1); сдвиг не больше двух ulp.

    Args:
        values: Вектор x

    Returns:
        Скорректированный x и его дополнение 1 - x
    """
    values = np.array(values, dtype=np.float64)
    complement = 1.0 - values
    inexact = (1.0 - complement != values) | (complement + values != 1.0)
    if np.any(inexact):
        exponents = np.frexp(np.maximum(np.abs(values[inexact]), 1.0))[1]
        grid = np.ldexp(1.0, exponents - 51)
        values[inexact] = np.round(values[inexact] / grid) * grid
        complement[inexact] = 1.0 - values[inexact]
    return values, complement


@dataclass(frozen=True)
class LambdaVector:
    """Вектор показателей λ и τ = 1 - λ, хранимые так, что τ + λ = 1 точно"""

    values: np.ndarray
    tau: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.values, dtype=np.float64))
        if values.ndim != 1 or values.size == 0:
            raise InvalidArgumentError("Вектор λ должен быть непустым одномерным")
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("Вектор λ содержит нечисловые значения")
        if np.any(np.abs(values) >= MAX_LAMBDA_MAGNITUDE):
            raise InvalidArgumentError(f"Модуль λ должен быть меньше 2^50: {values.tolist()}")
        values, tau = exact_complement(values)
        values.setflags(write=False)
        tau.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "tau", tau)

    @property
    def num_classes(self) -> int:
        return int(self.values.size)

    @classmethod
    def constant(cls, value: float, num_classes: int) -> "LambdaVector":
        """Скалярное λ как постоянный вектор"""
        return cls(np.full(num_classes, float(value)))

    @classmethod
    def from_tau(cls, tau: ArrayLike) -> "LambdaVector":
        """λ = 1 - τ; точно представимое τ сохраняется без изменений"""
        tau = np.atleast_1d(np.asarray(tau, dtype=np.float64))
        if not np.all(np.isfinite(tau)) or np.any(np.abs(tau) >= MAX_LAMBDA_MAGNITUDE):
            raise InvalidArgumentError("Вектор τ должен быть конечным и по модулю меньше 2^50")
        _, values = exact_complement(tau)
        return cls(values)

    def expand(self, num_classes: int) -> "LambdaVector":
        """Расширение скаляра (вектор длины 1) до C компонент"""
        if self.num_classes == num_classes:
            return self
        if self.num_classes == 1:
            return LambdaVector.constant(float(self.values[0]), num_classes)
        raise InvalidArgumentError(f"Размерность λ {self.num_classes} не совпадает с числом классов {num_classes}")

    def to_list(self) -> List[float]:
        return self.values.tolist()


@dataclass(frozen=True)
class EnsembleSpec:
    """Мультимножество λ-векторов экспертов и их среднее λ̄"""

    experts: tuple
    lambda_bar: np.ndarray = field(compare=False)

    @property
    def num_experts(self) -> int:
        return len(self.experts)

    @property
    def num_classes(self) -> int:
        return self.experts[0].num_classes

    def to_dict(self) -> dict:
        return {
            "experts": [expert.to_list() for expert in self.experts],
            "lambda_bar": self.lambda_bar.tolist(),
        }


def lt_exponential_prior(num_classes: int, rho: float) -> LabelDistribution:
    """Экспоненциальный длиннохвостый профиль: p_i ∝ rho^(-i/(C-1))

    Args:
        num_classes: Число классов C
        rho: Коэффициент дисбаланса (отношение первого класса к последнему)

    Returns:
        Распределение с p_0 / p_{C-1} = rho
    """
    if num_classes < 1:
        raise InvalidArgumentError(f"Число классов должно быть положительным: {num_classes}")
    if not rho >= 1.0:
        raise InvalidArgumentError(f"Коэффициент дисбаланса должен быть не меньше 1: {rho}")
    if num_classes == 1:
        return LabelDistribution(np.ones(1))
    exponents = -np.arange(num_classes, dtype=np.float64) / (num_classes - 1)
    return LabelDistribution.from_log_weights(exponents * np.log(rho))


def pareto_prior(num_classes: int, alpha: float) -> LabelDistribution:
    """Ранговый степенной профиль: p_i ∝ (i+1)^(-1/alpha)

    Args:
        num_classes: Число классов C
        alpha: Параметр распределения Парето

    Returns:
        Монотонно невозрастающее распределение
    """
    if num_classes < 1:
        raise InvalidArgumentError(f"Число классов должно быть положительным: {num_classes}")
    if not alpha > 0.0:
        raise InvalidArgumentError(f"Параметр Парето должен быть положительным: {alpha}")
    ranks = np.arange(1, num_classes + 1, dtype=np.float64)
    return LabelDistribution.from_log_weights(-np.log(ranks) / alpha)


def lambda_prior(p_train: LabelDistribution, lam: LambdaVector) -> LabelDistribution:
    """Сдвинутое распределение P^λ(y) ∝ P^train(y)^λ_y (вычисляется в лог-пространстве)

    Args:
        p_train: Обучающее априорное распределение
        lam: Вектор показателей λ

    Returns:
        Целевое распределение P^λ
    """
    lam = lam.expand(p_train.num_classes)
    with np.errstate(over="ignore", invalid="ignore"):
        log_weights = lam.values * p_train.log_probs
    return LabelDistribution.from_log_weights(log_weights)


def bias_prior(p_train: LabelDistribution, bias: ArrayLike) -> LabelDistribution:
    """Распределение после аддитивного сдвига логарифма: ∝ P^train(y)·exp(bias_y)"""
    bias = np.asarray(bias, dtype=np.float64)
    if bias.shape != p_train.probs.shape:
        raise InvalidArgumentError(f"Размер сдвига {bias.shape} не совпадает с числом классов {p_train.num_classes}")
    return LabelDistribution.from_log_weights(p_train.log_probs + bias)


def margin_matrix(p_train: LabelDistribution, tau: ArrayLike) -> np.ndarray:
    """Матрица попарных отступов Δ[y][j] = τ_j log p_j - τ_y log p_y

    Args:
        p_train: Обучающее априорное распределение
        tau: Вектор τ (скаляр расширяется до постоянного вектора)

    Returns:
        Антисимметричная матрица C×C
    """
    tau = np.broadcast_to(np.asarray(tau, dtype=np.float64), p_train.probs.shape)
    adjustment = tau * p_train.log_probs
    return adjustment[np.newaxis, :] - adjustment[:, np.newaxis]


def target_lambda_bar(p_train: LabelDistribution, p_test: LabelDistribution) -> np.ndarray:
    """Средний сдвиг ансамбля для известного тестового распределения: log(P^test / P^train)

    Args:
        p_train: Обучающее распределение
        p_test: Известное тестовое распределение

    Returns:
        Вектор λ̄; bias_prior(p_train, λ̄) воспроизводит p_test
    """
    _check_same_classes(p_train, p_test)
    return p_test.log_probs - p_train.log_probs


def exponent_for_target(p_train: LabelDistribution, p_test: LabelDistribution) -> LambdaVector:
    """Показатели λ, при которых lambda_prior(p_train, λ) = p_test точно

    λ_y = log p_test[y] / log p_train[y]; для C = 1 возвращается нулевой вектор.
    """
    _check_same_classes(p_train, p_test)
    if p_train.num_classes == 1:
        return LambdaVector(np.zeros(1))
    return LambdaVector(p_test.log_probs / p_train.log_probs)


def make_ensemble_spec(lambdas: Sequence[Union[LambdaVector, ArrayLike, float]],
                       num_classes: int = None) -> EnsembleSpec:
    """Сборка описания ансамбля из списка λ

    Args:
        lambdas: λ экспертов (LambdaVector, вектор или скаляр)
        num_classes: Число классов для расширения скалярных λ

    Returns:
        EnsembleSpec с λ̄, равным покомпонентному среднему
    """
    if len(lambdas) == 0:
        raise InvalidArgumentError("Ансамбль должен содержать хотя бы одного эксперта")
    experts = [item if isinstance(item, LambdaVector) else LambdaVector(item) for item in lambdas]
    if num_classes is None:
        num_classes = max(expert.num_classes for expert in experts)
    experts = tuple(expert.expand(num_classes) for expert in experts)
    lambda_bar = np.mean(np.stack([expert.values for expert in experts]), axis=0)
    lambda_bar.setflags(write=False)
    logger.debug(f"Ансамбль из {len(experts)} экспертов, λ̄ = {lambda_bar.tolist()}")
    return EnsembleSpec(experts=experts, lambda_bar=lambda_bar)


def shift_ensemble(spec: EnsembleSpec, delta: float) -> EnsembleSpec:
    """Сдвиг всех экспертов на delta; λ̄ сдвигается на ту же величину"""
    return make_ensemble_spec([LambdaVector(expert.values + delta) for expert in spec.experts])


def equidistant_lambdas(num_experts: int, low: float = -1.0, high: float = 1.0) -> List[float]:
    """Равномерно разнесённые λ от high до low; один эксперт получает λ = 0"""
    if num_experts < 1:
        raise InvalidArgumentError(f"Число экспертов должно быть положительным: {num_experts}")
    if num_experts == 1:
        return [0.0]
    return np.linspace(high, low, num_experts).tolist()


def effective_prior(p_train: LabelDistribution, spec: EnsembleSpec) -> LabelDistribution:
    """Распределение P^λ̄, на которое нацелен откалиброванный ансамбль"""
    return lambda_prior(p_train, LambdaVector(spec.lambda_bar))


def _check_same_classes(first: LabelDistribution, second: LabelDistribution):
    if first.num_classes != second.num_classes:
        raise InvalidArgumentError(
            f"Распределения заданы на разном числе классов: {first.num_classes} и {second.num_classes}"
        )
