#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Сервис серий экспериментов
Повторное обучение и оценка ансамбля по сетке одного параметра:
числа экспертов, силы mixup или сдвига λ̄
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

from loguru import logger

from core.config import EvalConfig, MixupConfig, SweepConfig, TrainConfig
from core.errors import InvalidArgumentError
from core.expert_manager import ExpertManager
from core.priors import EnsembleSpec, effective_prior, equidistant_lambdas, make_ensemble_spec, shift_ensemble
from services.data_service import Dataset
from services.evaluation_service import evaluate
from services.training_service import TrainingService

STUDIES = ("experts", "mixup", "lambda-bar")


@dataclass
class SweepSetting:
    """Одна точка серии: ансамбль и параметры mixup"""

    value: float
    ensemble: EnsembleSpec
    mixup: MixupConfig


@dataclass
class SweepPoint:
    """Результат обучения и оценки в одной точке серии"""

    value: float
    lambdas: List[List[float]]
    lambda_bar: List[float]
    mixup_alpha: Optional[float]
    target_prior: List[float]
    accuracy: float
    balanced_error: float
    ece: float
    mce: float
    kl: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return dict(vars(self))


def study_settings(study: str, sweep: SweepConfig, base: EnsembleSpec, mixup: MixupConfig) -> List[SweepSetting]:
    """Сетка серии

    Args:
        study: experts, mixup или lambda-bar
        sweep: Значения сеток
        base: Ансамбль из конфигурации эксперимента
        mixup: Параметры mixup из конфигурации обучения

    Returns:
        Список точек серии в порядке сетки
    """
    num_classes = base.num_classes
    if study == "experts":
        return [SweepSetting(float(count),
                             make_ensemble_spec(equidistant_lambdas(count, sweep.lambda_low, sweep.lambda_high),
                                                num_classes),
                             mixup)
                for count in sweep.expert_counts]
    if study == "mixup":
        return [SweepSetting(alpha, base, MixupConfig(enabled=alpha > 0, alpha=alpha if alpha > 0 else mixup.alpha))
                for alpha in sweep.mixup_alphas]
    if study == "lambda-bar":
        # сдвиг задаётся относительно λ̄ исходного ансамбля
        return [SweepSetting(delta, shift_ensemble(base, delta), mixup) for delta in sweep.lambda_bar_shifts]
    raise InvalidArgumentError(f"Неизвестная серия {study!r}, доступны: {', '.join(STUDIES)}")


def run_study(settings: List[SweepSetting], train: Dataset, test: Dataset,
              build_model: Callable[[EnsembleSpec], ExpertManager], train_config: TrainConfig,
              eval_config: EvalConfig, seed: int) -> List[SweepPoint]:
    """Обучение и оценка ансамбля в каждой точке серии

    Args:
        settings: Точки серии
        train: Обучающая выборка
        test: Сбалансированная тестовая выборка
        build_model: Построение свежей модели под ансамбль
        train_config: Гиперпараметры обучения (mixup берётся из точки серии)
        eval_config: Параметры оценки
        seed: Сид оценки

    Returns:
        Результаты по точкам в порядке сетки
    """
    train_prior = train.empirical_prior()
    points = []
    for setting in settings:
        model = build_model(setting.ensemble)
        config = train_config.model_copy(update={"mixup": setting.mixup})
        TrainingService(model, setting.ensemble, config, train_prior).fit(train)
        report = evaluate(model, test, train_prior, setting.ensemble, eval_config, seed, train_counts=train.counts)
        point = SweepPoint(
            value=setting.value,
            lambdas=[expert.to_list() for expert in setting.ensemble.experts],
            lambda_bar=setting.ensemble.lambda_bar.tolist(),
            mixup_alpha=setting.mixup.alpha if setting.mixup.enabled else None,
            target_prior=effective_prior(train_prior, setting.ensemble).probs.tolist(),
            accuracy=report.accuracy,
            balanced_error=report.balanced_error,
            ece=report.ece,
            mce=report.mce,
            kl=report.kl,
        )
        points.append(point)
        logger.info(f"Точка {setting.value:g}: BER {point.balanced_error:.4f}, ECE {point.ece:.4f}")
    return points
