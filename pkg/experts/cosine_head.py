#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Косинусная голова эксперта
ψ(z, y) = κ · w_yᵀ z / (||w_y|| ||z||), значения ограничены отрезком [-κ, κ]
"""

import numpy as np

from core.errors import InvalidArgumentError
from experts.base_head import BaseHead

# Стабилизатор нормы: ||v|| считается как sqrt(Σv² + NORM_EPS)
NORM_EPS = 1e-12


class CosineHead(BaseHead):
    """Голова с косинусным сходством и масштабом κ"""

    def __init__(self, name: str, in_features: int, num_classes: int, kappa: float = 32.0):
        """Инициализация косинусной головы

        Args:
            name: Имя головы
            in_features: Размерность признаков ствола
            num_classes: Число классов
            kappa: Масштаб κ
        """
        super().__init__(name, in_features, num_classes)
        if not kappa > 0:
            raise InvalidArgumentError(f"Масштаб κ должен быть положительным: {kappa}")
        self.kappa = float(kappa)
        self._add_param("weight", (num_classes, in_features))
        self._cache = None

    def forward(self, inputs: np.ndarray) -> np.ndarray:
        weight = self.params["weight"]
        input_norms = np.sqrt(np.sum(inputs ** 2, axis=1, keepdims=True) + NORM_EPS)
        weight_norms = np.sqrt(np.sum(weight ** 2, axis=1, keepdims=True) + NORM_EPS)
        units = inputs / input_norms
        directions = weight / weight_norms
        self._cache = (units, input_norms, directions, weight_norms)
        return self.kappa * units @ directions.T

    def backward(self, grad_outputs: np.ndarray) -> np.ndarray:
        units, input_norms, directions, weight_norms = self._cache
        scaled = self.kappa * grad_outputs

        # d/dz: проекция на касательное пространство единичной сферы, делённая на норму
        grad_units = scaled @ directions
        radial = np.sum(grad_units * units, axis=1, keepdims=True)
        grad_inputs = (grad_units - radial * units) / input_norms

        grad_directions = scaled.T @ units
        radial = np.sum(grad_directions * directions, axis=1, keepdims=True)
        self.grads["weight"] += (grad_directions - radial * directions) / weight_norms
        return grad_inputs
