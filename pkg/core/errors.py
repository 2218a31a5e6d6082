#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Иерархия исключений лаборатории
Каждое исключение знает код завершения, с которым main.py выходит из процесса
"""

from typing import Optional


class LabError(Exception):
    """Базовое исключение для всех ошибок лаборатории"""

    exit_code = 1


class InvalidArgumentError(LabError, ValueError):
    """Аргумент нарушает предусловие операции"""

    exit_code = 1


class ConfigError(LabError):
    """Ошибка в конфигурации эксперимента"""

    exit_code = 1


class ArtifactIOError(LabError, OSError):
    """Ошибка чтения или записи артефакта"""

    exit_code = 1

    def __init__(self, message: str, path: Optional[str] = None):
        """
        Args:
            message: Текст ошибки
            path: Путь к файлу, на котором произошла ошибка
        """
        self.path = path
        if path is not None:
            message = f"{message} (путь: {path})"
        super().__init__(message)


class NumericRangeError(LabError, ArithmeticError):
    """Вычисление вышло за пределы представимых значений"""

    exit_code = 2


class TrainingDivergedError(NumericRangeError):
    """Обучение разошлось: функция потерь стала нечисловой"""

    exit_code = 2

    def __init__(self, message: str, epoch: int, batch: int):
        """
        Args:
            message: Текст ошибки
            epoch: Номер эпохи, на которой произошло расхождение
            batch: Номер батча внутри эпохи
        """
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"{message} (эпоха {epoch}, батч {batch})")


class VerificationError(LabError):
    """Численная проверка теоремы не уложилась в допуск"""

    exit_code = 3
