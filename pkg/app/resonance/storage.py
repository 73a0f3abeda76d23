import csv
import hashlib
import json
import logging
import os
import zipfile
from typing import Optional, Tuple

import numpy as np


LOGGER = logging.getLogger(__name__)


def ensure_cache_dir(cache_root: str) -> None:
    os.makedirs(cache_root, exist_ok=True)


def content_key(descriptor: dict) -> str:
    payload = json.dumps(descriptor, sort_keys=True, separators=(',', ':'))
    return hashlib.sha1(payload.encode('utf-8')).hexdigest()


def gram_path(cache_root: str, key: str) -> str:
    return os.path.join(cache_root, 'grams', f'{key}.npz')


def load_gram_tables(cache_root: str, key: str) -> Optional[Tuple[np.ndarray, float]]:
    path = gram_path(cache_root, key)
    if not os.path.exists(path):
        return None
    try:
        with np.load(path, allow_pickle=False) as payload:
            if str(payload['key']) != key:
                return None
            return payload['moments'].copy(), float(payload['estimate'])
    except (OSError, KeyError, ValueError, zipfile.BadZipFile):
        LOGGER.warning('slabres gram cache unreadable path=%s', path)
        return None


def save_gram_tables(cache_root: str, key: str, moments: np.ndarray, estimate: float) -> str:
    ensure_cache_dir(os.path.join(cache_root, 'grams'))
    path = gram_path(cache_root, key)
    tmp_path = path + '.tmp.npz'
    np.savez(tmp_path, key=np.array(key), moments=moments, estimate=np.array(estimate))
    os.replace(tmp_path, path)
    return path


def save_document(path: str, payload: dict) -> str:
    directory = os.path.dirname(os.path.abspath(path))
    ensure_cache_dir(directory)
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write('\n')
    return path


def load_document(path: str) -> Optional[dict]:
    if not os.path.exists(path):
        return None
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            payload = json.load(handle)
    except (OSError, json.JSONDecodeError):
        return None
    if not isinstance(payload, dict):
        return None
    return payload


def save_csv(path: str, header, rows) -> str:
    ensure_cache_dir(os.path.dirname(os.path.abspath(path)))
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)
    return path
