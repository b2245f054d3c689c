"""
Run manifests: what a command was asked to do and which files it touched.
"""

import hashlib
import json
import logging
import uuid
from pathlib import Path

from django.db import DatabaseError
from django.utils import timezone

from .conf import pruning_settings

logger = logging.getLogger(__name__)

MANIFEST_SUFFIX = '.manifest.json'


def file_checksum(path):
    digest = hashlib.sha256()
    with Path(path).open('rb') as stream:
        for chunk in iter(lambda: stream.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def build_manifest(command, config, seed, inputs=(), outputs=()):
    """
    Manifest dictionary of one run.

    Args:
        command: command name
        config: JSON-serializable option snapshot
        seed: seed of the run
        inputs: paths read
        outputs: paths written

    Returns:
        dict: command, config, seed, inputs, outputs, timestamp (ISO-8601
        UTC), checksums (sha256 of each existing file) and run_id
    """

    inputs = [str(path) for path in inputs if path]
    outputs = [str(path) for path in outputs if path]
    checksums = {path: file_checksum(path) for path in inputs + outputs if Path(path).is_file()}
    return {
        'run_id': str(uuid.uuid4()),
        'command': command,
        'config': config,
        'seed': seed,
        'inputs': inputs,
        'outputs': outputs,
        'timestamp': timezone.now().isoformat(),
        'checksums': checksums,
    }


def manifest_path(artifact):
    artifact = Path(artifact)
    return artifact.with_name(artifact.name + MANIFEST_SUFFIX)


def write_manifest(manifest, artifact):
    """Write ``manifest`` as ``<artifact>.manifest.json``; returns its path."""

    path = manifest_path(artifact)
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2, default=str) + '\n', encoding='utf-8')
    logger.info("Wrote run manifest %s", path)
    return path


def record_run(manifest):
    """
    Persist ``manifest`` as a Run row.

    Returns:
        Run | None: None when recording is switched off or the database is
        not usable (the failure is logged, never raised)
    """

    if not pruning_settings()['RECORD_RUNS']:
        return None
    from .models import Run  # pylint: disable=import-outside-toplevel

    try:
        return Run.objects.create(
            run_id=manifest['run_id'],
            command=manifest['command'],
            config=manifest['config'],
            seed=manifest['seed'] or 0,
            inputs=manifest['inputs'],
            outputs=manifest['outputs'],
            checksums=manifest['checksums'],
        )
    except DatabaseError as exc:
        logger.warning("Run %s not recorded: %s", manifest['run_id'], exc)
        return None
