import json
import logging
import os
import time
from os import path as osp

import yaml

from src.core.errors import CubeIOError

_HANDLER_TAG = '_bench_handler'


def prepare_output_dir(cfg, out_dir=None):
    """
    Create the run directory and store the effective config next to the results.
    Deterministic runs write straight into out_dir (no timestamp in the name).
    """
    if out_dir:
        logdir = out_dir
    elif cfg.DETERMINISTIC:
        logdir = osp.join(cfg.OUTPUT_DIR, cfg.EXP_NAME)
    else:
        logtime = time.strftime('%d-%m-%Y_%H-%M-%S')
        logdir = osp.join(cfg.OUTPUT_DIR, f'{logtime}_{cfg.EXP_NAME}')

    try:
        os.makedirs(logdir, exist_ok=True)
    except OSError as exc:
        raise CubeIOError(f"cannot create output directory {logdir}: {exc}") from exc

    save_dict_to_yaml(yaml.safe_load(cfg.dump()), osp.join(logdir, 'config.yaml'))
    return logdir


def save_dict_to_yaml(obj, filename, mode='w'):
    with open(filename, mode) as f:
        yaml.dump(obj, f, default_flow_style=False)


def save_dict_to_json(obj, filename):
    """Sorted keys and a trailing newline so identical runs give identical bytes."""
    try:
        with open(filename, 'w') as f:
            json.dump(obj, f, indent=2, sort_keys=True)
            f.write('\n')
    except OSError as exc:
        raise CubeIOError(f"{filename}: {exc}") from exc


def save_to_file(obj, filename, mode='w'):
    try:
        with open(filename, mode) as f:
            f.write(obj)
    except OSError as exc:
        raise CubeIOError(f"{filename}: {exc}") from exc


def create_logger(logdir, phase='bench', level=logging.INFO):
    """
    Log to <logdir>/<phase>_log.txt and the console. Handlers from an earlier call
    are replaced, so repeated runs in one process do not duplicate lines.
    """
    os.makedirs(logdir, exist_ok=True)
    log_file = osp.join(logdir, f'{phase}_log.txt')

    logger = logging.getLogger()
    for handler in list(logger.handlers):
        if getattr(handler, _HANDLER_TAG, False):
            logger.removeHandler(handler)
            handler.close()

    head = '%(asctime)-15s %(message)s'
    for handler in (logging.FileHandler(log_file), logging.StreamHandler()):
        handler.setFormatter(logging.Formatter(head))
        setattr(handler, _HANDLER_TAG, True)
        logger.addHandler(handler)
    logger.setLevel(level)
    return logger
