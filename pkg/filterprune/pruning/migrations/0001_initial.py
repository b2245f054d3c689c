import uuid

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='Run',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('run_id', models.UUIDField(default=uuid.uuid4, editable=False, unique=True, verbose_name='Идентификатор запуска')),
                ('command', models.CharField(max_length=32, verbose_name='Команда')),
                ('config', models.JSONField(default=dict, verbose_name='Конфигурация')),
                ('seed', models.BigIntegerField(default=0, verbose_name='Зерно')),
                ('inputs', models.JSONField(default=list, verbose_name='Входные файлы')),
                ('outputs', models.JSONField(default=list, verbose_name='Выходные файлы')),
                ('checksums', models.JSONField(default=dict, verbose_name='Контрольные суммы')),
                ('created_at', models.DateTimeField(auto_now_add=True, verbose_name='Создан')),
            ],
            options={
                'verbose_name': 'Запуск',
                'verbose_name_plural': 'Запуски',
                'ordering': ['-created_at', '-id'],
            },
        ),
    ]
