import uuid

from django.db import models


class Run(models.Model):
    """
    Запись об одном запуске management-команды, достаточная для его повтора.

    Атрибуты:
    - run_id: Уникальный идентификатор, он же записан в файл манифеста
    - command: Имя команды (train, sweep, prune, ...)
    - config: Снимок проверенных опций
    - seed: Зерно, от которого шла вся случайность запуска
    - inputs: Прочитанные командой пути
    - outputs: Записанные командой пути
    - checksums: sha256 каждого существующего входного/выходного файла
    - created_at: Время создания записи

    Свойства:
    - artifact_count: Количество записанных файлов
    """

    run_id = models.UUIDField(default=uuid.uuid4, unique=True, editable=False, verbose_name='Идентификатор запуска')
    command = models.CharField(max_length=32, verbose_name='Команда')
    config = models.JSONField(default=dict, verbose_name='Конфигурация')
    seed = models.BigIntegerField(default=0, verbose_name='Зерно')
    inputs = models.JSONField(default=list, verbose_name='Входные файлы')
    outputs = models.JSONField(default=list, verbose_name='Выходные файлы')
    checksums = models.JSONField(default=dict, verbose_name='Контрольные суммы')
    created_at = models.DateTimeField(auto_now_add=True, verbose_name='Создан')

    class Meta:
        ordering = ['-created_at', '-id']
        verbose_name = "Запуск"
        verbose_name_plural = "Запуски"

    def __str__(self):
        return f"{self.command} {self.run_id}"

    @property
    def artifact_count(self):
        """Количество записанных файлов."""
        return len(self.outputs)
