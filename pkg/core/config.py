#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Конфигурация экспериментов
Модели pydantic с версионированной схемой, пресеты и применение переопределений
из командной строки
"""

import copy
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from core.errors import ArtifactIOError, ConfigError

SCHEMA_VERSION = 1


class StrictModel(BaseModel):
    """Базовая модель: неизвестные ключи отклоняются"""

    model_config = ConfigDict(extra="forbid")


class MixupConfig(StrictModel):
    """Параметры mixup: ξ ~ Beta(alpha, alpha)"""

    enabled: bool = True
    alpha: float = Field(default=0.4, gt=0)


class TrainConfig(StrictModel):
    """Гиперпараметры SGD"""

    epochs: int = Field(default=30, gt=0)
    batch_size: int = Field(default=128, gt=0)
    # lr = 0 допустим: параметры (и затухание весов) не меняются
    lr: float = Field(default=0.1, ge=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    weight_decay: float = Field(default=5e-4, ge=0)
    schedule: Literal["constant", "multistep", "cosine"] = "multistep"
    milestones: List[float] = Field(default_factory=lambda: [0.8, 0.9])
    gamma: float = Field(default=0.1, gt=0)
    warmup_epochs: int = Field(default=0, ge=0)
    seed: int = 0
    mixup: MixupConfig = Field(default_factory=MixupConfig)

    @field_validator("milestones")
    @classmethod
    def _check_milestones(cls, value: List[float]) -> List[float]:
        if any(not 0.0 < item <= 1.0 for item in value):
            raise ValueError("вехи расписания задаются долями бюджета эпох из (0, 1]")
        return sorted(value)


class ModelConfig(StrictModel):
    """Архитектура: общий ствол и головы экспертов"""

    depth: Literal[0, 1] = 1
    hidden: int = Field(default=32, gt=0)
    activation: Literal["relu", "tanh"] = "relu"
    head: Literal["linear", "cosine"] = "linear"
    kappa: float = Field(default=32.0, gt=0)
    init: Literal["uniform", "zeros"] = "uniform"
    # эксперты делят весь ствол целиком
    shared_trunk: Literal["full"] = "full"


class PriorConfig(StrictModel):
    """Профиль обучающего априорного распределения"""

    profile: Literal["exponential", "pareto", "explicit"] = "exponential"
    rho: float = Field(default=100.0, ge=1)
    alpha: float = Field(default=6.0, gt=0)
    probs: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check_explicit(self) -> "PriorConfig":
        if self.profile == "explicit" and not self.probs:
            raise ValueError("для профиля explicit нужен список probs")
        return self


class DatasetConfig(StrictModel):
    """Источник данных: синтетическая смесь гауссиан или CSV"""

    kind: Literal["synthetic", "csv"] = "synthetic"
    num_classes: int = Field(default=3, gt=0)
    dim: int = Field(default=2, gt=0)
    n_train: int = Field(default=6000, gt=0)
    # размер сбалансированной тестовой выборки на класс
    n_test_per_class: int = Field(default=1000, gt=0)
    sigma: float = Field(default=1.0, gt=0)
    radius: float = Field(default=2.5, gt=0)
    train_path: Optional[str] = None
    test_path: Optional[str] = None

    @model_validator(mode="after")
    def _check_paths(self) -> "DatasetConfig":
        if self.kind == "csv" and (not self.train_path or not self.test_path):
            raise ValueError("для kind=csv нужны train_path и test_path")
        return self


class EvalConfig(StrictModel):
    """Протокол оценки: сдвинутые распределения и калибровка"""

    shifted_irs: List[float] = Field(default_factory=lambda: [2.0, 5.0, 10.0, 25.0, 50.0])
    known_prior: bool = True
    bins: int = Field(default=15, gt=0)


class VerifyConfig(StrictModel):
    """Численная проверка свойства произведения экспертов"""

    tolerance: float = Field(default=1e-9, gt=0)
    n_points: int = Field(default=1000, gt=0)
    lambda_sets: List[List[float]] = Field(default_factory=lambda: [[1.0, 0.0, -1.0], [1.0, -0.25, -1.5], [0.0]])
    random_sets: int = Field(default=10, ge=0)


class SweepConfig(StrictModel):
    """Серии обучений: число экспертов, сила mixup и сдвиг λ̄"""

    expert_counts: List[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5])
    lambda_low: float = -1.0
    lambda_high: float = 1.0
    # α = 0 означает обучение без mixup
    mixup_alphas: List[float] = Field(default_factory=lambda: [0.0, 0.2, 0.4, 0.8])
    lambda_bar_shifts: List[float] = Field(default_factory=lambda: [-1.0, -0.5, 0.0, 0.5, 1.0])

    @field_validator("expert_counts")
    @classmethod
    def _check_counts(cls, value: List[int]) -> List[int]:
        if not value or any(count < 1 for count in value):
            raise ValueError("число экспертов в серии должно быть положительным")
        return value

    @field_validator("mixup_alphas")
    @classmethod
    def _check_alphas(cls, value: List[float]) -> List[float]:
        if not value or any(alpha < 0 for alpha in value):
            raise ValueError("значения α задаются неотрицательными")
        return value


class ExperimentConfig(StrictModel):
    """Полная конфигурация эксперимента"""

    schema_version: Literal[1] = SCHEMA_VERSION
    name: str = "experiment"
    seed: int = 0
    output_dir: str = "runs/experiment"
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    prior: PriorConfig = Field(default_factory=PriorConfig)
    experts: List[Union[float, List[float]]] = Field(default_factory=lambda: [1.0, 0.0, -1.0])
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)

    @field_validator("experts")
    @classmethod
    def _check_experts(cls, value: list) -> list:
        if not value:
            raise ValueError("список λ экспертов не может быть пустым")
        return value


# Пресеты повторяют гиперпараметры трёх эталонных бенчмарков в настольном масштабе
PRESETS: Dict[str, Dict[str, Any]] = {
    "cifar-like": {
        "name": "cifar-like",
        "prior": {"profile": "exponential", "rho": 100.0},
        "experts": [1.0, 0.0, -1.0],
        "train": {"lr": 0.1, "batch_size": 128, "momentum": 0.9, "weight_decay": 5e-4,
                  "schedule": "multistep", "milestones": [0.8, 0.9], "warmup_epochs": 5,
                  "mixup": {"enabled": True, "alpha": 0.4}},
    },
    "cifar10-like": {
        "name": "cifar10-like",
        "dataset": {"num_classes": 10, "dim": 2},
        "prior": {"profile": "exponential", "rho": 100.0},
        "experts": [1.0, 0.0, -1.0],
        "train": {"lr": 0.1, "batch_size": 128, "schedule": "multistep", "warmup_epochs": 5,
                  "mixup": {"enabled": True, "alpha": 0.8}},
    },
    "imagenet-like": {
        "name": "imagenet-like",
        "dataset": {"num_classes": 20, "dim": 8},
        "prior": {"profile": "pareto", "alpha": 6.0},
        "experts": [1.0, -0.25, -1.5],
        "train": {"lr": 0.025, "batch_size": 64, "weight_decay": 5e-4, "schedule": "cosine",
                  "mixup": {"enabled": True, "alpha": 0.3}},
    },
    "inaturalist-like": {
        "name": "inaturalist-like",
        "dataset": {"num_classes": 30, "dim": 8},
        "prior": {"profile": "pareto", "alpha": 6.0},
        "experts": [2.0, 0.0, -2.0],
        "train": {"lr": 0.2, "batch_size": 512, "weight_decay": 2e-4, "schedule": "cosine",
                  "mixup": {"enabled": True, "alpha": 0.2}},
    },
}


def parse_override(text: str) -> Tuple[List[str], Any]:
    """Разбор переопределения вида key.path=value (значение парсится как JSON)

    Args:
        text: Строка переопределения

    Returns:
        Путь ключей и значение
    """
    if "=" not in text:
        raise ConfigError(f"Переопределение должно иметь вид ключ=значение: {text}")
    key, raw_value = text.split("=", 1)
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value
    path = [part for part in key.strip().split(".") if part]
    if not path:
        raise ConfigError(f"Пустой ключ в переопределении: {text}")
    return path, value


def apply_overrides(raw: Dict[str, Any], overrides: List[str]) -> Dict[str, Any]:
    """Применение переопределений к сырому словарю конфигурации"""
    result = copy.deepcopy(raw)
    for text in overrides:
        path, value = parse_override(text)
        node = result
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"Ключ {part} в переопределении {text} не является разделом")
        node[path[-1]] = value
        logger.debug(f"Переопределение {'.'.join(path)} = {value!r}")
    return result


def _merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config(path: Optional[str] = None, preset: Optional[str] = None,
                overrides: Optional[List[str]] = None) -> ExperimentConfig:
    """Загрузка и валидация конфигурации

    Args:
        path: Путь к JSON-файлу конфигурации
        preset: Имя пресета, поверх которого накладывается файл
        overrides: Переопределения key.path=value

    Returns:
        Провалидированная конфигурация
    """
    raw: Dict[str, Any] = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"Неизвестный пресет {preset}; доступны: {', '.join(sorted(PRESETS))}")
        raw = copy.deepcopy(PRESETS[preset])
    if path is not None:
        config_path = Path(path)
        try:
            file_raw = json.loads(config_path.read_text(encoding="utf-8"))
        except OSError as e:
            raise ArtifactIOError(f"Не удалось прочитать конфигурацию: {e}", str(config_path)) from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"Конфигурация {config_path} не является корректным JSON: {e}") from e
        raw = _merge(raw, file_raw)
    raw = apply_overrides(raw, overrides or [])
    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"Ошибка валидации конфигурации:\n{e}") from e
    logger.info(f"Конфигурация {config.name} загружена (хеш {config_hash(config)[:12]})")
    return config


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 канонического JSON конфигурации"""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# Разделы, не влияющие на обученную модель
NON_TRAINING_SECTIONS = ("name", "output_dir", "eval", "verify", "sweep")


def training_hash(config: ExperimentConfig) -> str:
    """SHA-256 только тех разделов, от которых зависят данные и обученная модель"""
    payload = {key: value for key, value in config.model_dump(mode="json").items()
               if key not in NON_TRAINING_SECTIONS}
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
