#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Менеджер экспертов
Модель из общего ствола и набора голов: по одной голове на каждого λ-эксперта
ансамбля. Отвечает за регистрацию голов, прямой и обратный проход и доступ
к параметрам
"""

from typing import Dict, List, Optional

import numpy as np
from loguru import logger

from core.config import ModelConfig
from core.errors import InvalidArgumentError, NumericRangeError
from core.priors import EnsembleSpec
from core.rng import make_rng
from experts.base_head import BaseHead
from experts.cosine_head import CosineHead
from experts.linear_head import LinearHead
from experts.trunk import Trunk


class ExpertManager:
    """Модель: общий ствол и головы экспертов"""

    def __init__(self, trunk: Trunk, num_classes: int, ensemble: Optional[EnsembleSpec] = None):
        """Инициализация менеджера экспертов

        Args:
            trunk: Общий ствол
            num_classes: Число классов C
            ensemble: Описание ансамбля, к которому привязаны головы
        """
        self.trunk = trunk
        self.num_classes = num_classes
        self.ensemble = ensemble
        self.heads: List[BaseHead] = []
        logger.debug(f"Менеджер экспертов создан: {trunk}")

    @classmethod
    def build(cls, config: ModelConfig, in_features: int, ensemble: EnsembleSpec, seed: int) -> "ExpertManager":
        """Сборка модели по конфигурации, по голове на эксперта

        Args:
            config: Архитектура
            in_features: Размерность признаков d
            ensemble: Описание ансамбля
            seed: Сид инициализации

        Returns:
            Инициализированная модель
        """
        trunk = Trunk(in_features, hidden=config.hidden, depth=config.depth, activation=config.activation)
        manager = cls(trunk, ensemble.num_classes, ensemble)
        for index in range(ensemble.num_experts):
            name = f"head{index}"
            if config.head == "cosine":
                head = CosineHead(name, trunk.out_features, ensemble.num_classes, kappa=config.kappa)
            else:
                head = LinearHead(name, trunk.out_features, ensemble.num_classes)
            manager.register_head(head)
        manager.initialize(make_rng(seed), config.init)
        logger.info(f"Модель собрана: {ensemble.num_experts} голов ({config.head}), ствол глубины {config.depth}")
        return manager

    def register_head(self, head: BaseHead):
        """Регистрация головы эксперта

        Args:
            head: Голова с размерами, согласованными со стволом
        """
        if head.in_features != self.trunk.out_features or head.num_classes != self.num_classes:
            raise InvalidArgumentError(f"Размеры головы {head} не согласованы со стволом и числом классов")
        if any(existing.name == head.name for existing in self.heads):
            raise InvalidArgumentError(f"Голова {head.name} уже зарегистрирована")
        self.heads.append(head)
        logger.debug(f"Голова {head.name} зарегистрирована")

    def initialize(self, rng: np.random.Generator, scheme: str = "uniform"):
        """Инициализация всех слоёв одним потоком случайных чисел"""
        for layer in self.layers:
            layer.initialize(rng, scheme)

    @property
    def layers(self) -> list:
        return [self.trunk] + self.heads

    @property
    def num_experts(self) -> int:
        return len(self.heads)

    def _check_bound(self):
        if self.ensemble is not None and self.ensemble.num_experts != self.num_experts:
            raise InvalidArgumentError(
                f"Число голов {self.num_experts} не совпадает с размером ансамбля {self.ensemble.num_experts}"
            )

    def forward(self, features: np.ndarray) -> List[np.ndarray]:
        """Логиты каждого эксперта

        Args:
            features: Матрица признаков B×d

        Returns:
            Список матриц B×C, по одной на эксперта
        """
        self._check_bound()
        self.check_finite()
        features = np.asarray(features, dtype=np.float64)
        hidden = self.trunk.forward(features)
        return [head.forward(hidden) for head in self.heads]

    def expert_logits(self, features: np.ndarray) -> List[np.ndarray]:
        return self.forward(features)

    def backward(self, grad_logits: List[np.ndarray]):
        """Обратный проход: градиенты голов суммируются на выходе ствола

        Args:
            grad_logits: Градиенты потерь по логитам каждого эксперта
        """
        if len(grad_logits) != self.num_experts:
            raise InvalidArgumentError("Число градиентов не совпадает с числом голов")
        grad_hidden = None
        for head, grad in zip(self.heads, grad_logits):
            contribution = head.backward(grad)
            grad_hidden = contribution if grad_hidden is None else grad_hidden + contribution
        self.trunk.backward(grad_hidden)

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def parameters(self) -> Dict[str, np.ndarray]:
        """Параметры в фиксированном порядке: имя слоя.имя параметра -> массив"""
        return {f"{layer.name}.{key}": value for layer in self.layers for key, value in layer.params.items()}

    def gradients(self) -> Dict[str, np.ndarray]:
        return {f"{layer.name}.{key}": value for layer in self.layers for key, value in layer.grads.items()}

    def check_finite(self):
        """Проверка, что все параметры конечны"""
        for name, value in self.parameters().items():
            if not np.all(np.isfinite(value)):
                raise NumericRangeError(f"Параметр {name} содержит нечисловые значения")

    def state_dict(self) -> Dict[str, list]:
        return {name: value.tolist() for name, value in self.parameters().items()}

    def load_state_dict(self, state: Dict[str, list]):
        """Загрузка параметров из словаря с проверкой форм"""
        parameters = self.parameters()
        missing = set(parameters) - set(state)
        if missing:
            raise InvalidArgumentError(f"В состоянии модели отсутствуют параметры: {sorted(missing)}")
        for name, value in parameters.items():
            loaded = np.asarray(state[name], dtype=np.float64)
            if loaded.shape != value.shape:
                raise InvalidArgumentError(f"Форма параметра {name}: ожидалась {value.shape}, получена {loaded.shape}")
            value[...] = loaded

    def __str__(self):
        return f"ExpertManager(trunk={self.trunk}, heads={len(self.heads)})"

    def __repr__(self):
        return self.__str__()
