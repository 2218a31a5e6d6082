#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Проверка градиентов центральными конечными разностями
Используется для слоёв модели и функций потерь
"""

from typing import Callable, Dict

import numpy as np

from core.errors import InvalidArgumentError
from experts.base_head import BaseLayer

# Шаг центральной разности
DEFAULT_STEP = 1e-5


def numeric_gradient(fn: Callable[[], float], array: np.ndarray, step: float = DEFAULT_STEP) -> np.ndarray:
    """Градиент fn по массиву array, изменяемому на месте

    Args:
        fn: Функция без аргументов, читающая array
        array: Массив float64, по которому дифференцируем
        step: Шаг h

    Returns:
        (fn(a + h e_i) - fn(a - h e_i)) / 2h по всем элементам
    """
    if array.dtype != np.float64:
        raise InvalidArgumentError("Численный градиент считается только по массивам float64")
    grad = np.zeros_like(array)
    for index in np.ndindex(array.shape):
        original = array[index]
        array[index] = original + step
        plus = fn()
        array[index] = original - step
        minus = fn()
        array[index] = original
        grad[index] = (plus - minus) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """‖a - n‖ / (‖a‖ + ‖n‖); два нулевых градиента дают 0"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_layer(layer: BaseLayer, inputs: np.ndarray, rng: np.random.Generator,
                step: float = DEFAULT_STEP) -> Dict[str, float]:
    """Сравнение обратного прохода слоя с конечными разностями

    Скалярная функция равна Σ G ⊙ forward(x) со случайной матрицей G.

    Args:
        layer: Проверяемый слой
        inputs: Вход слоя B×in
        rng: Генератор для G
        step: Шаг разности

    Returns:
        Относительные ошибки по каждому параметру и по входу ("inputs")
    """
    inputs = np.array(inputs, dtype=np.float64)
    weights = rng.standard_normal(layer.forward(inputs).shape)

    def objective() -> float:
        return float(np.sum(weights * layer.forward(inputs)))

    layer.zero_grad()
    layer.forward(inputs)
    grad_inputs = layer.backward(weights)
    errors = {"inputs": relative_error(grad_inputs, numeric_gradient(objective, inputs, step))}
    for key, value in layer.params.items():
        analytic = layer.grads[key].copy()
        errors[key] = relative_error(analytic, numeric_gradient(objective, value, step))
    return errors
