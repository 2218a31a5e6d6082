#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Базовые классы слоёв модели
Определяют общий интерфейс параметров, градиентов и прямого/обратного прохода
для ствола и голов экспертов
"""

from abc import ABC, abstractmethod
from typing import Dict

import numpy as np
from loguru import logger

from core.errors import InvalidArgumentError


class BaseLayer(ABC):
    """Абстрактный слой с параметрами и буферами градиентов"""

    def __init__(self, name: str):
        """Инициализация слоя

        Args:
            name: Уникальное имя слоя внутри модели
        """
        self.name = name
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}

    def _add_param(self, key: str, shape: tuple):
        self.params[key] = np.zeros(shape, dtype=np.float64)
        self.grads[key] = np.zeros(shape, dtype=np.float64)

    def initialize(self, rng: np.random.Generator, scheme: str = "uniform"):
        """Инициализация параметров

        Args:
            rng: Генератор случайных чисел
            scheme: "uniform" (±1/sqrt(fan_in)) или "zeros"
        """
        if scheme not in ("uniform", "zeros"):
            raise InvalidArgumentError(f"Неизвестная схема инициализации: {scheme}")
        for key, value in self.params.items():
            if scheme == "zeros" or key == "bias":
                value[...] = 0.0
            else:
                bound = 1.0 / np.sqrt(value.shape[-1])
                value[...] = rng.uniform(-bound, bound, size=value.shape)
        logger.debug(f"Слой {self.name} инициализирован по схеме {scheme}")

    def zero_grad(self):
        """Обнуление буферов градиентов"""
        for grad in self.grads.values():
            grad[...] = 0.0

    @abstractmethod
    def forward(self, inputs: np.ndarray) -> np.ndarray:
        """Прямой проход; запоминает промежуточные значения для обратного"""
        pass

    @abstractmethod
    def backward(self, grad_outputs: np.ndarray) -> np.ndarray:
        """Обратный проход

        Args:
            grad_outputs: Градиент потерь по выходу слоя

        Returns:
            Градиент потерь по входу слоя (градиенты параметров накапливаются в self.grads)
        """
        pass

    def __str__(self):
        shapes = {key: value.shape for key, value in self.params.items()}
        return f"{type(self).__name__}(name={self.name}, params={shapes})"

    def __repr__(self):
        return self.__str__()


class BaseHead(BaseLayer):
    """Голова эксперта: отображение признаков ствола h -> C логитов"""

    def __init__(self, name: str, in_features: int, num_classes: int):
        """Инициализация головы

        Args:
            name: Имя головы
            in_features: Размерность признаков ствола h
            num_classes: Число классов C
        """
        super().__init__(name)
        if in_features < 1 or num_classes < 1:
            raise InvalidArgumentError(f"Некорректные размеры головы: h={in_features}, C={num_classes}")
        self.in_features = in_features
        self.num_classes = num_classes
