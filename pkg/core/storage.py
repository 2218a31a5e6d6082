#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Хранилище артефактов эксперимента
Отвечает за запись и чтение контрольных точек, журналов потерь, отчётов
и таблиц надёжности внутри каталога запуска
"""

import csv
import json
from pathlib import Path
from typing import Any, Dict, List, Optional

from loguru import logger

from core.errors import ArtifactIOError, InvalidArgumentError

# Версия формата контрольной точки
CHECKPOINT_VERSION = 1

CHECKPOINT_FILE = "checkpoint.json"
TRACE_FILE = "loss_trace.csv"
REPORT_FILE = "eval_report.json"
RELIABILITY_FILE = "reliability.csv"
THEOREM_FILE = "theorem_report.json"
SWEEP_FILE = "sweep_{study}.json"
SWEEP_TABLE = "sweep_{study}.csv"


def provenance_line(metadata: Dict[str, Any]) -> str:
    """Строка-комментарий CSV с хешем конфигурации и сидом"""
    if "config_hash" not in metadata or "seed" not in metadata:
        raise InvalidArgumentError("Метаданные артефакта должны содержать config_hash и seed")
    return f"# config_hash={metadata['config_hash']}, seed={metadata['seed']}\n"


class ArtifactStore:
    """Класс для работы с артефактами одного запуска"""

    def __init__(self, root: Path):
        """Инициализация хранилища

        Args:
            root: Каталог запуска
        """
        self.root = Path(root)
        logger.debug(f"Хранилище артефактов: {self.root}")

    def path(self, name: str) -> Path:
        return self.root / name

    def _write_text(self, name: str, text: str) -> Path:
        target = self.path(name)
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(text, encoding="utf-8")
        except OSError as e:
            raise ArtifactIOError(f"Не удалось записать артефакт: {e}", str(target)) from e
        logger.info(f"Артефакт записан: {target}")
        return target

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        """Запись JSON с сортировкой ключей (одинаковые входы дают одинаковые байты)"""
        return self._write_text(name, json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")

    def read_json(self, name: str) -> Dict[str, Any]:
        source = self.path(name)
        try:
            return json.loads(source.read_text(encoding="utf-8"))
        except OSError as e:
            raise ArtifactIOError(f"Не удалось прочитать артефакт: {e}", str(source)) from e
        except json.JSONDecodeError as e:
            raise ArtifactIOError(f"Артефакт не является корректным JSON: {e}", str(source)) from e

    def write_csv(self, name: str, header: List[str], rows: List[List[Any]],
                  metadata: Optional[Dict[str, Any]] = None) -> Path:
        """Запись CSV; при наличии метаданных первой идёт строка-комментарий с хешем конфигурации и сидом

        Args:
            name: Имя файла в каталоге запуска
            header: Заголовок таблицы
            rows: Строки
            metadata: Метаданные артефакта (config_hash, seed)
        """
        target = self.path(name)
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            with open(target, "w", newline="", encoding="utf-8") as handle:
                if metadata is not None:
                    handle.write(provenance_line(metadata))
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(header)
                writer.writerows(rows)
        except OSError as e:
            raise ArtifactIOError(f"Не удалось записать таблицу: {e}", str(target)) from e
        logger.info(f"Таблица записана: {target}")
        return target

    def save_checkpoint(self, state: Dict[str, Any], metadata: Dict[str, Any]) -> Path:
        """Сохранение контрольной точки

        Args:
            state: Состояние обучения (параметры, моменты, состояние генератора)
            metadata: Формы, описание ансамбля, хеш конфигурации, сид
        """
        return self.write_json(CHECKPOINT_FILE, {"version": CHECKPOINT_VERSION, "metadata": metadata, "state": state})

    def load_checkpoint(self) -> Dict[str, Any]:
        """Загрузка контрольной точки с проверкой версии формата"""
        payload = self.read_json(CHECKPOINT_FILE)
        if payload.get("version") != CHECKPOINT_VERSION:
            raise InvalidArgumentError(f"Неподдерживаемая версия контрольной точки: {payload.get('version')}")
        return payload

    def has_checkpoint(self) -> bool:
        return self.path(CHECKPOINT_FILE).exists()

    def save_trace(self, records: List[Dict[str, Any]], metadata: Optional[Dict[str, Any]] = None) -> Path:
        """Журнал потерь: epoch, split, loss, accuracy"""
        rows = [[record["epoch"], record["split"], repr(record["loss"]), repr(record["accuracy"])] for record in records]
        return self.write_csv(TRACE_FILE, ["epoch", "split", "loss", "accuracy"], rows, metadata)

    def save_reliability(self, rows: List[Dict[str, float]], metadata: Optional[Dict[str, Any]] = None) -> Path:
        """Таблица надёжности для внешних графиков"""
        header = ["bin_low", "bin_high", "count", "accuracy", "confidence"]
        table = [[repr(row[key]) if key != "count" else row[key] for key in header] for row in rows]
        return self.write_csv(RELIABILITY_FILE, header, table, metadata)

    def save_sweep(self, study: str, points: List[Dict[str, Any]], metadata: Dict[str, Any]) -> Path:
        """Результаты серии: полный JSON и краткая CSV-таблица для графиков

        Args:
            study: Имя серии (experts, mixup, lambda-bar)
            points: Результаты точек серии
            metadata: Метаданные артефакта
        """
        header = ["value", "balanced_error", "accuracy", "ece", "mce", "kl_ensemble"]
        table = [[repr(point["value"]), repr(point["balanced_error"]), repr(point["accuracy"]), repr(point["ece"]),
                  repr(point["mce"]), repr(point["kl"]["ensemble"])] for point in points]
        self.write_csv(SWEEP_TABLE.format(study=study), header, table, metadata)
        return self.write_json(SWEEP_FILE.format(study=study), {"study": study, "points": points, "metadata": metadata})
