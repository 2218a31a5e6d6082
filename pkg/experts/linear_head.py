#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Линейная голова эксперта: f(z) = W z + b
"""

import numpy as np

from experts.base_head import BaseHead


class LinearHead(BaseHead):
    """Аффинная голова эксперта"""

    def __init__(self, name: str, in_features: int, num_classes: int):
        super().__init__(name, in_features, num_classes)
        self._add_param("weight", (num_classes, in_features))
        self._add_param("bias", (num_classes,))
        self._inputs = None

    def forward(self, inputs: np.ndarray) -> np.ndarray:
        self._inputs = inputs
        return inputs @ self.params["weight"].T + self.params["bias"]

    def backward(self, grad_outputs: np.ndarray) -> np.ndarray:
        self.grads["weight"] += grad_outputs.T @ self._inputs
        self.grads["bias"] += grad_outputs.sum(axis=0)
        return grad_outputs @ self.params["weight"]
