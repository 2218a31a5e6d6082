#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Лаборатория длиннохвостой классификации на ансамблях логит-скорректированных экспертов
Главный файл проекта: загружает окружение, настраивает журналирование
и выполняет подкоманды gen-data, train, eval, sweep, verify-theorem, report
"""

import argparse
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from dotenv import load_dotenv
from loguru import logger

from core.config import ExperimentConfig, config_hash, load_config, training_hash
from core.ensemble import OracleEnsemble, verify_theorem1
from core.errors import ConfigError, InvalidArgumentError, LabError, VerificationError
from core.expert_manager import ExpertManager
from core.metrics import ReliabilityBins
from core.priors import (LabelDistribution, LambdaVector, make_ensemble_spec, lt_exponential_prior,
                         pareto_prior)
from core.rng import derive_seed, make_rng, rng_info
from core.storage import REPORT_FILE, THEOREM_FILE, ArtifactStore
from services.data_service import (Dataset, GaussianMixture, circle_mixture, load_dataset, random_mixture,
                                   sample_balanced, sample_dataset, save_dataset)
from services.evaluation_service import evaluate, shifted_summary
from services.sweep_service import STUDIES, run_study, study_settings
from services.training_service import TrainingService

# Загрузка переменных окружения из файла lab.env рядом с main.py
env_path = Path(__file__).parent / "lab.env"
load_dotenv(dotenv_path=env_path)

# Ключи подпотоков случайности, выводимых из общего сида
SEED_TRAIN_DATA = 1
SEED_TEST_DATA = 2
SEED_MODEL_INIT = 3
SEED_TRAINING = 4
SEED_EVAL = 5
SEED_VERIFY = 6
SEED_MIXTURE = 7


def setup_logging():
    """Настройка журналирования loguru по переменным окружения"""
    logger.remove()
    logger.add(sys.stderr, level=os.getenv("LAB_LOG_LEVEL", "INFO"))
    log_file = os.getenv("LAB_LOG_FILE")
    if log_file:
        logger.add(log_file, level="DEBUG", rotation="10 MB", retention=3)


class LabArgumentParser(argparse.ArgumentParser):
    """Разбор аргументов с кодом выхода 1 при ошибке использования"""

    def error(self, message):
        self.print_usage(sys.stderr)
        logger.error(f"Ошибка в аргументах командной строки: {message}")
        sys.exit(ConfigError.exit_code)


def build_prior(config: ExperimentConfig) -> LabelDistribution:
    """Обучающее распределение меток по профилю из конфигурации"""
    prior = config.prior
    num_classes = config.dataset.num_classes
    if prior.profile == "exponential":
        return lt_exponential_prior(num_classes, prior.rho)
    if prior.profile == "pareto":
        return pareto_prior(num_classes, prior.alpha)
    if len(prior.probs) != num_classes:
        raise ConfigError(f"Явное распределение задано на {len(prior.probs)} классах, ожидалось {num_classes}")
    return LabelDistribution.from_weights(prior.probs, eps=0.0)


def build_mixture(config: ExperimentConfig) -> GaussianMixture:
    """Порождающая смесь гауссиан для синтетических данных"""
    dataset = config.dataset
    prior = build_prior(config)
    if dataset.dim == 2:
        return circle_mixture(prior, radius=dataset.radius, sigma=dataset.sigma)
    return random_mixture(prior, dataset.dim, scale=dataset.radius, sigma=dataset.sigma,
                          seed=derive_seed(config.seed, SEED_MIXTURE))


def generate_datasets(config: ExperimentConfig) -> Tuple[Dataset, Dataset]:
    """Обучающая длиннохвостая и сбалансированная тестовая выборки"""
    mixture = build_mixture(config)
    train = sample_dataset(mixture, config.dataset.n_train, derive_seed(config.seed, SEED_TRAIN_DATA))
    balanced = mixture.with_prior(LabelDistribution.uniform(mixture.num_classes))
    test = sample_balanced(balanced, config.dataset.n_test_per_class, derive_seed(config.seed, SEED_TEST_DATA))
    return train, test


def obtain_datasets(config: ExperimentConfig, workdir: Path) -> Tuple[Dataset, Dataset]:
    """Выборки эксперимента: CSV, ранее сгенерированные файлы или генерация в памяти"""
    if config.dataset.kind == "csv":
        return load_dataset(workdir / config.dataset.train_path), load_dataset(workdir / config.dataset.test_path)
    run_dir = workdir / config.output_dir
    if (run_dir / "train" / "meta.json").exists() and (run_dir / "test" / "meta.json").exists():
        return load_dataset(run_dir / "train"), load_dataset(run_dir / "test")
    logger.info("Файлы выборок не найдены, выборки генерируются по конфигурации")
    return generate_datasets(config)


def build_ensemble(config: ExperimentConfig):
    return make_ensemble_spec(config.experts, config.dataset.num_classes)


def artifact_metadata(config: ExperimentConfig, overrides: List[str], command: str) -> Dict[str, Any]:
    """Метаданные, встраиваемые в каждый артефакт"""
    return {"command": command, "config_hash": config_hash(config), "training_hash": training_hash(config),
            "seed": config.seed,
            "overrides": list(overrides), "rng": rng_info(config.seed)}


def check_checkpoint_config(checkpoint: Dict[str, Any], config: ExperimentConfig, action: str):
    """Контрольная точка должна быть получена с теми же разделами данных, модели и обучения"""
    stored = checkpoint.get("metadata", {}).get("training_hash")
    if stored != training_hash(config):
        raise ConfigError(f"Контрольная точка получена с другой конфигурацией, отклонено: {action}")


def cmd_gen_data(config: ExperimentConfig, workdir: Path, overrides: List[str]):
    """Генерация выборок и запись data.csv + meta.json"""
    if config.dataset.kind != "synthetic":
        raise ConfigError("Подкоманда gen-data работает только с синтетическими выборками")
    train, test = generate_datasets(config)
    metadata = artifact_metadata(config, overrides, "gen-data")
    save_dataset(train, workdir / config.output_dir / "train", metadata)
    save_dataset(test, workdir / config.output_dir / "test", metadata)


def cmd_train(config: ExperimentConfig, workdir: Path, overrides: List[str], resume: bool = False,
              stop_epoch: Optional[int] = None):
    """Обучение ансамбля экспертов с записью контрольной точки и журнала потерь"""
    train, _ = obtain_datasets(config, workdir)
    spec = build_ensemble(config)
    model = ExpertManager.build(config.model, train.dim, spec, derive_seed(config.seed, SEED_MODEL_INIT))
    train_config = config.train.model_copy(update={"seed": derive_seed(config.seed, SEED_TRAINING, config.train.seed)})
    service = TrainingService(model, spec, train_config, train.empirical_prior())
    store = ArtifactStore(workdir / config.output_dir)
    metadata = artifact_metadata(config, overrides, "train")
    if resume and store.has_checkpoint():
        checkpoint = store.load_checkpoint()
        check_checkpoint_config(checkpoint, config, "возобновление обучения")
        service.load_state_dict(checkpoint["state"])
    service.fit(train, stop_epoch=stop_epoch)
    metadata.update({
        "ensemble": spec.to_dict(),
        "model": config.model.model_dump(mode="json"),
        "train": config.train.model_dump(mode="json"),
        "shapes": {name: list(value.shape) for name, value in model.parameters().items()},
        "in_features": train.dim,
        "num_classes": train.num_classes,
        "train_counts": train.counts.tolist(),
    })
    store.save_checkpoint(service.state_dict(), metadata)
    store.save_trace([record.to_dict() for record in service.trace], metadata)


def cmd_eval(config: ExperimentConfig, workdir: Path, overrides: List[str], oracle: bool = False):
    """Оценка ансамбля по полному протоколу"""
    train, test = obtain_datasets(config, workdir)
    spec = build_ensemble(config)
    store = ArtifactStore(workdir / config.output_dir)
    if oracle:
        if train.mixture is None:
            raise ConfigError("Оракульная оценка требует синтетических данных с известной смесью")
        source = OracleEnsemble(train.mixture, spec.experts)
        train_prior = train.mixture.prior
    else:
        checkpoint = store.load_checkpoint()
        check_checkpoint_config(checkpoint, config, "оценка")
        source = ExpertManager.build(config.model, train.dim, spec, derive_seed(config.seed, SEED_MODEL_INIT))
        source.load_state_dict(checkpoint["state"]["parameters"])
        train_prior = LabelDistribution(np.asarray(checkpoint["state"]["train_prior"]))
    report = evaluate(source, test, train_prior, spec, config.eval, derive_seed(config.seed, SEED_EVAL),
                      train_counts=train.counts)
    report.metadata = {**artifact_metadata(config, overrides, "eval"), "oracle": oracle}
    store.write_json(REPORT_FILE, report.to_dict())
    store.save_reliability(_reliability_rows(report.reliability), report.metadata)
    for name, unadjusted, adjusted in shifted_summary(report):
        logger.info(f"{name}: точность {unadjusted:.4f}, после корректировки {adjusted}")


def cmd_sweep(config: ExperimentConfig, workdir: Path, overrides: List[str], study: str):
    """Серия обучений по числу экспертов, силе mixup или сдвигу λ̄"""
    train, test = obtain_datasets(config, workdir)
    settings = study_settings(study, config.sweep, build_ensemble(config), config.train.mixup)
    model_seed = derive_seed(config.seed, SEED_MODEL_INIT)
    train_config = config.train.model_copy(update={"seed": derive_seed(config.seed, SEED_TRAINING, config.train.seed)})

    def build_model(spec):
        return ExpertManager.build(config.model, train.dim, spec, model_seed)

    points = run_study(settings, train, test, build_model, train_config, config.eval,
                       derive_seed(config.seed, SEED_EVAL))
    metadata = {**artifact_metadata(config, overrides, "sweep"), "study": study}
    ArtifactStore(workdir / config.output_dir).save_sweep(study, [point.to_dict() for point in points], metadata)
    best = min(points, key=lambda point: point.balanced_error)
    logger.info(f"Серия {study}: наименьшая BER {best.balanced_error:.4f} в точке {best.value:g}")


def _reliability_rows(reliability: Dict[str, list]) -> List[Dict[str, float]]:
    return ReliabilityBins.from_dict(reliability).rows()


def random_lambda_sets(count: int, seed: int) -> List[List[float]]:
    """Случайные мультимножества λ размером от 1 до 7"""
    rng = make_rng(seed)
    return [np.round(rng.uniform(-2.0, 2.0, size=int(rng.integers(1, 8))), 6).tolist() for _ in range(count)]


def cmd_verify_theorem(config: ExperimentConfig, workdir: Path, overrides: List[str]):
    """Численная проверка: ансамбль оракульных экспертов нацелен на P^λ̄"""
    mixture = build_mixture(config)
    verify = config.verify
    points_seed = derive_seed(config.seed, SEED_VERIFY)
    points = sample_dataset(mixture, verify.n_points, points_seed).features
    lambda_sets = [list(item) for item in verify.lambda_sets]
    lambda_sets += random_lambda_sets(verify.random_sets, derive_seed(config.seed, SEED_VERIFY, 1))
    deviations = [verify_theorem1(mixture, [LambdaVector.constant(value, mixture.num_classes) for value in values],
                                  points) for values in lambda_sets]
    max_deviation = max(deviations)
    passed = max_deviation < verify.tolerance
    report = {"lambda_sets": lambda_sets, "deviations": deviations, "n_points": verify.n_points,
              "max_deviation": max_deviation, "tolerance": verify.tolerance, "passed": passed,
              "seed": config.seed, "metadata": artifact_metadata(config, overrides, "verify-theorem")}
    ArtifactStore(workdir / config.output_dir).write_json(THEOREM_FILE, report)
    logger.info(f"Максимальное отклонение {max_deviation:.3e} при допуске {verify.tolerance:.1e}")
    if not passed:
        raise VerificationError(f"Отклонение {max_deviation:.3e} превышает допуск {verify.tolerance:.1e}")


def cmd_report(config: ExperimentConfig, workdir: Path, input_path: Optional[str] = None):
    """Повторный вывод таблицы надёжности из готового отчёта"""
    store = ArtifactStore(workdir / config.output_dir)
    if input_path is not None:
        source = Path(input_path)
        store = ArtifactStore(source.parent)
        report = store.read_json(source.name)
    else:
        report = store.read_json(REPORT_FILE)
    if "reliability" not in report:
        raise InvalidArgumentError("В отчёте нет таблицы надёжности")
    store.save_reliability(_reliability_rows(report["reliability"]), report.get("metadata"))


def build_parser() -> argparse.ArgumentParser:
    parser = LabArgumentParser(prog="main.py", description="Лаборатория сбалансированных ансамблей экспертов")
    parser.add_argument("--config", help="JSON-файл конфигурации")
    parser.add_argument("--preset", help="Имя пресета (cifar-like, cifar10-like, imagenet-like, inaturalist-like)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Переопределение поля конфигурации")
    parser.add_argument("--workdir", default=os.getenv("LAB_WORKDIR", "."), help="Корень для всех путей")
    parser.add_argument("--seed", type=int, help="Сид эксперимента")
    subparsers = parser.add_subparsers(dest="command", required=True)
    subparsers.add_parser("gen-data", help="Сгенерировать выборки")
    train = subparsers.add_parser("train", help="Обучить ансамбль")
    train.add_argument("--resume", action="store_true", help="Продолжить с контрольной точки")
    train.add_argument("--stop-epoch", type=int, help="Прервать обучение после этой эпохи")
    evaluate_parser = subparsers.add_parser("eval", help="Оценить ансамбль")
    evaluate_parser.add_argument("--oracle", action="store_true", help="Оракульные эксперты вместо модели")
    sweep = subparsers.add_parser("sweep", help="Серия обучений по сетке одного параметра")
    sweep.add_argument("--study", required=True, choices=STUDIES, help="Параметр серии")
    subparsers.add_parser("verify-theorem", help="Проверить свойство произведения экспертов")
    report = subparsers.add_parser("report", help="Повторно вывести таблицу надёжности")
    report.add_argument("--input", help="Путь к eval_report.json")
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """Выполнение подкоманды; возвращает код завершения"""
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    try:
        workdir = Path(args.workdir)
        config_path = str(workdir / args.config) if args.config else None
        config = load_config(config_path, args.preset, overrides)
        logger.info(f"Подкоманда {args.command}, каталог запуска {workdir / config.output_dir}")
        if args.command == "gen-data":
            cmd_gen_data(config, workdir, overrides)
        elif args.command == "train":
            cmd_train(config, workdir, overrides, resume=args.resume, stop_epoch=args.stop_epoch)
        elif args.command == "eval":
            cmd_eval(config, workdir, overrides, oracle=args.oracle)
        elif args.command == "sweep":
            cmd_sweep(config, workdir, overrides, args.study)
        elif args.command == "verify-theorem":
            cmd_verify_theorem(config, workdir, overrides)
        elif args.command == "report":
            cmd_report(config, workdir, str(workdir / args.input) if args.input else None)
    except LabError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    logger.info(f"Подкоманда {args.command} завершена")
    return 0


def main():
    """Основная функция запуска"""
    setup_logging()
    sys.exit(run())


if __name__ == "__main__":
    main()
