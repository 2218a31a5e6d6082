#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Сервис обучения экспертов
Мини-батчевый SGD с моментом и затуханием весов: каждый λ-эксперт минимизирует
свою gLA-потерю с τ = 1 - λ, общая потеря равна среднему по экспертам.
Состояние обучения сохраняется и восстанавливается побитово точно
"""

import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from tqdm import tqdm

from core.config import TrainConfig
from core.ensemble import combine
from core.errors import InvalidArgumentError, TrainingDivergedError
from core.expert_manager import ExpertManager
from core.losses import mixed_gla_batch
from core.priors import EnsembleSpec, LabelDistribution
from core.rng import make_rng, restore_rng, rng_state
from services.data_service import Dataset
from services.mixup_service import mix_batch


@dataclass
class EpochRecord:
    """Запись журнала потерь за эпоху"""

    epoch: int
    split: str
    loss: float
    accuracy: float
    lr: float
    expert_accuracy: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {"epoch": self.epoch, "split": self.split, "loss": self.loss, "accuracy": self.accuracy,
                "lr": self.lr, "expert_accuracy": self.expert_accuracy}


def learning_rate(config: TrainConfig, epoch: int) -> float:
    """Шаг обучения на эпохе (нумерация с 0) с учётом разогрева и расписания

    Args:
        config: Гиперпараметры
        epoch: Номер эпохи

    Returns:
        Шаг обучения
    """
    if config.warmup_epochs and epoch < config.warmup_epochs:
        return config.lr * (epoch + 1) / config.warmup_epochs
    if config.schedule == "multistep":
        passed = sum(1 for milestone in config.milestones if epoch >= round(milestone * config.epochs))
        return config.lr * config.gamma ** passed
    if config.schedule == "cosine":
        span = max(config.epochs - config.warmup_epochs, 1)
        progress = (epoch - config.warmup_epochs) / span
        return 0.5 * config.lr * (1.0 + math.cos(math.pi * progress))
    return config.lr


class TrainingService:
    """Обучение модели экспертов на наборе данных"""

    def __init__(self, model: ExpertManager, ensemble: EnsembleSpec, config: TrainConfig,
                 train_prior: Optional[LabelDistribution] = None):
        """Инициализация сервиса обучения

        Args:
            model: Модель с головой на каждого эксперта
            ensemble: Описание ансамбля
            config: Гиперпараметры SGD и mixup
            train_prior: P^train; по умолчанию берётся эмпирическое распределение выборки
        """
        if model.num_experts != ensemble.num_experts:
            raise InvalidArgumentError(
                f"Число голов {model.num_experts} не совпадает с числом экспертов {ensemble.num_experts}"
            )
        self.model = model
        self.ensemble = ensemble
        self.config = config
        self.train_prior = train_prior
        self.rng = make_rng(config.seed)
        self.velocity = {name: np.zeros_like(value) for name, value in model.parameters().items()}
        self.epoch = 0
        self.trace: List[EpochRecord] = []

    def _step(self, lr: float):
        """Шаг SGD: v <- μv + (g + wd·w); w <- w - lr·v"""
        gradients = self.model.gradients()
        for name, value in self.model.parameters().items():
            update = gradients[name] + self.config.weight_decay * value
            self.velocity[name] = self.config.momentum * self.velocity[name] + update
            value -= lr * self.velocity[name]

    def _batch(self, features: np.ndarray, labels: np.ndarray, num_classes: int,
               log_prior: np.ndarray) -> Tuple[float, List[np.ndarray]]:
        """Прямой и обратный проход по батчу

        Returns:
            Средняя по экспертам потеря на смешанном батче и логиты экспертов на исходном батче
        """
        mixed = mix_batch(features, labels, self.config.mixup, self.rng, num_classes)
        # точность считается по несмешанным входам; этот проход должен идти раньше смешанного,
        # обратный проход использует кеши последнего прямого
        clean_logits = self.model.forward(features) if self.config.mixup.enabled else None
        self.model.zero_grad()
        expert_logits = self.model.forward(mixed.features)
        losses, grads = [], []
        for logits, expert in zip(expert_logits, self.ensemble.experts):
            loss, grad = mixed_gla_batch(logits, mixed.labels_a, mixed.labels_b, mixed.xi, expert.tau, log_prior)
            losses.append(loss)
            # общая потеря равна среднему по экспертам
            grads.append(grad / self.ensemble.num_experts)
        self.model.backward(grads)
        return float(np.mean(losses)), expert_logits if clean_logits is None else clean_logits

    def fit(self, dataset: Dataset, stop_epoch: Optional[int] = None) -> List[EpochRecord]:
        """Обучение до config.epochs (или до stop_epoch) начиная с текущей эпохи

        Args:
            dataset: Обучающая выборка
            stop_epoch: Эпоха, после которой прерваться (для возобновления)

        Returns:
            Журнал потерь по эпохам
        """
        if dataset.size == 0:
            raise InvalidArgumentError("Обучающая выборка пуста")
        # P^train фиксируется при первом запуске и сохраняется при возобновлении
        if self.train_prior is None:
            self.train_prior = dataset.empirical_prior()
        log_prior = self.train_prior.log_probs
        last_epoch = self.config.epochs if stop_epoch is None else min(stop_epoch, self.config.epochs)
        show_progress = os.getenv("LAB_PROGRESS", "1") != "0"
        epochs = tqdm(range(self.epoch, last_epoch), desc="обучение", disable=not show_progress, leave=False)
        for epoch in epochs:
            # Одна эпоха: перемешивание и шаги SGD по батчам
            lr = learning_rate(self.config, epoch)
            order = self.rng.permutation(dataset.size)
            total_loss, seen = 0.0, 0
            correct = np.zeros(self.ensemble.num_experts + 1)
            for batch_index, start in enumerate(range(0, dataset.size, self.config.batch_size)):
                indices = order[start:start + self.config.batch_size]
                labels = dataset.labels[indices]
                loss, expert_logits = self._batch(dataset.features[indices], labels, dataset.num_classes, log_prior)
                if not math.isfinite(loss):
                    raise TrainingDivergedError("Потеря стала нечисловой", epoch=epoch, batch=batch_index)
                self._step(lr)
                total_loss += loss * indices.size
                seen += indices.size
                for expert_index, logits in enumerate(expert_logits):
                    correct[expert_index] += np.sum(np.argmax(logits, axis=1) == labels)
                correct[-1] += np.sum(np.argmax(combine(expert_logits), axis=1) == labels)
            # Запись эпохи в журнал; точность считается по исходным, несмешанным примерам
            record = EpochRecord(epoch=epoch, split="train", loss=float(total_loss / seen),
                                 accuracy=float(correct[-1] / seen),
                                 lr=lr, expert_accuracy=(correct[:-1] / seen).tolist())
            self.trace.append(record)
            self.epoch = epoch + 1
            epochs.set_postfix(loss=f"{record.loss:.4f}")
            logger.debug(f"Эпоха {epoch}: потеря {record.loss:.6f}, точность {record.accuracy:.4f}, lr {lr:g}")
        if self.trace:
            logger.info(f"Обучение остановлено на эпохе {self.epoch}, потеря {self.trace[-1].loss:.6f}")
        return self.trace

    def state_dict(self) -> Dict[str, Any]:
        """Полное состояние обучения для возобновления"""
        return {
            "epoch": self.epoch,
            "parameters": self.model.state_dict(),
            "velocity": {name: value.tolist() for name, value in self.velocity.items()},
            "rng_state": rng_state(self.rng),
            "train_prior": self.train_prior.probs.tolist() if self.train_prior is not None else None,
            "trace": [record.to_dict() for record in self.trace],
        }

    def load_state_dict(self, state: Dict[str, Any]):
        """Восстановление состояния, сохранённого state_dict"""
        self.model.load_state_dict(state["parameters"])
        for name in self.velocity:
            self.velocity[name] = np.asarray(state["velocity"][name], dtype=np.float64).reshape(self.velocity[name].shape)
        self.rng = restore_rng(state["rng_state"])
        self.epoch = int(state["epoch"])
        if state.get("train_prior") is not None:
            self.train_prior = LabelDistribution(np.asarray(state["train_prior"]))
        self.trace = [EpochRecord(**record) for record in state.get("trace", [])]
        logger.info(f"Состояние обучения восстановлено на эпохе {self.epoch}")


def train(model: ExpertManager, dataset: Dataset, ensemble: EnsembleSpec,
          config: TrainConfig) -> Tuple[ExpertManager, List[EpochRecord]]:
    """Обучение модели экспертов

    Args:
        model: Модель
        dataset: Обучающая выборка
        ensemble: Описание ансамбля
        config: Гиперпараметры

    Returns:
        Обученная модель и журнал потерь
    """
    service = TrainingService(model, ensemble, config)
    trace = service.fit(dataset)
    return model, trace
