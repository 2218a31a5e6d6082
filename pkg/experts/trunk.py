#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Общий ствол модели
Глубина 0 пропускает признаки без изменений, глубина 1 даёт аффинное
отображение d -> h с поэлементной нелинейностью
"""

import numpy as np

from core.errors import InvalidArgumentError
from experts.base_head import BaseLayer

ACTIVATIONS = ("relu", "tanh")


class Trunk(BaseLayer):
    """Ствол, общий для всех голов экспертов"""

    def __init__(self, in_features: int, hidden: int = 32, depth: int = 1, activation: str = "relu"):
        """Инициализация ствола

        Args:
            in_features: Размерность входа d
            hidden: Число скрытых нейронов h (для depth=1)
            depth: 0 или 1
            activation: "relu" (кусочно-линейная) или "tanh" (гладкая)
        """
        super().__init__("trunk")
        if depth not in (0, 1):
            raise InvalidArgumentError(f"Поддерживается глубина 0 или 1, получено {depth}")
        if activation not in ACTIVATIONS:
            raise InvalidArgumentError(f"Неизвестная нелинейность: {activation}")
        self.in_features = in_features
        self.depth = depth
        self.activation = activation
        self.out_features = hidden if depth == 1 else in_features
        if depth == 1:
            self._add_param("weight", (hidden, in_features))
            self._add_param("bias", (hidden,))
        self._cache = None

    def forward(self, inputs: np.ndarray) -> np.ndarray:
        if self.depth == 0:
            return inputs
        pre_activation = inputs @ self.params["weight"].T + self.params["bias"]
        if self.activation == "relu":
            outputs = np.maximum(pre_activation, 0.0)
        else:
            outputs = np.tanh(pre_activation)
        self._cache = (inputs, pre_activation, outputs)
        return outputs

    def backward(self, grad_outputs: np.ndarray) -> np.ndarray:
        if self.depth == 0:
            return grad_outputs
        inputs, pre_activation, outputs = self._cache
        if self.activation == "relu":
            grad_pre = grad_outputs * (pre_activation > 0.0)
        else:
            grad_pre = grad_outputs * (1.0 - outputs ** 2)
        self.grads["weight"] += grad_pre.T @ inputs
        self.grads["bias"] += grad_pre.sum(axis=0)
        return grad_pre @ self.params["weight"]
