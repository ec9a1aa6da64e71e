"""
기본 규모 수용 실험 (수 분 소요)

    pytest -m slow
"""
import json
import re

import pandas as pd
import pytest

from emtriage.cli import main

pytestmark = pytest.mark.slow


def _payload(path):
    return json.loads(path.read_text(encoding='utf-8'))


def test_exp_crypto(cfg, tmp_path):
    assert main(['exp-crypto', '--workers', '4', '--results', str(tmp_path)], cfg=cfg) == 0
    payload = _payload(tmp_path / 'exp-crypto.json')
    assert payload['mean_accuracy'] >= 0.95
    assert payload['k'] == 10


def test_exp_programs(cfg, tmp_path):
    assert main(['exp-programs', '--workers', '4', '--results', str(tmp_path)], cfg=cfg) == 0
    assert _payload(tmp_path / 'exp-programs.json')['mean_accuracy'] >= 0.90
    confusion = pd.read_csv(tmp_path / 'programs_confusion.csv', index_col=0)
    assert confusion.shape == (10, 10)


def test_exp_downsample(cfg, tmp_path):
    assert main(['exp-downsample', '--workers', '4', '--results', str(tmp_path)], cfg=cfg) == 0
    table = pd.read_csv(tmp_path / 'downsample.csv').set_index('rate_mhz')
    assert table.loc[4.0, 'accuracy'] >= table.loc[20.0, 'accuracy'] - 0.02
    assert table.loc[4.0, 'storage_fraction'] == pytest.approx(0.2, abs=0.001)
    assert table.loc[0.5, 'accuracy'] <= table.loc[4.0, 'accuracy'] - 0.10


def test_exp_tamper(cfg, tmp_path, capsys):
    assert main(['exp-tamper', '--workers', '4', '--results', str(tmp_path)], cfg=cfg) == 0
    line = re.search(r'legit_err=(\d\.\d{3}) tamper_detect=(\d+)/20', capsys.readouterr().out)
    assert line
    assert float(line.group(1)) <= 0.25
    assert line.group(2) == '20'


def test_bench_20mhz_meets_deadline(cfg, tmp_path):
    assert main(['bench', '--rates', '20M', '--windows', '100', '--results', str(tmp_path)], cfg=cfg) == 0
    table = pd.read_csv(tmp_path / 'bench.csv')
    assert int(table['overruns'].sum()) == 0
    assert table['windows'].tolist() == [100]
