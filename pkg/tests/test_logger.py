#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

import io
from multiprocessing import Manager

import pytest

from shallowdiffusion.logger import Logger, NullLogger, format_fields


def test_format_fields():
    assert format_fields('epoch', t=0.5, loss=1.0 / 3.0, epoch=3) == 'epoch epoch=3 loss=0.333333 t=0.5'
    assert format_fields('done') == 'done'


def test_console_and_file_levels(tmp_path):
    stream = io.StringIO()
    log_file = tmp_path / 'run.log'
    logger = Logger('test-levels', log_filename=str(log_file), console_stream=stream, console_level='WARNING',
                    logfile_level='DEBUG', console_format='{levelname}: {message}')
    logger.log('INFO', 'quiet', 'on', 'console')
    logger.log_fields('WARNING', 'loud', n=2)
    logger.log('DEBUG', 'details')
    assert logger.is_enabled_for('DEBUG')
    logger.close()
    assert stream.getvalue() == 'WARNING: loud n=2\n'
    text = log_file.read_text(encoding='UTF-8')
    assert 'quiet on console' in text and 'loud n=2' in text and 'details' in text


def test_unknown_level_is_logged_as_critical():
    stream = io.StringIO()
    logger = Logger('test-unknown', console_stream=stream, console_format='{levelname}: {message}')
    logger.log('LOUD', 'hello')
    logger.close()
    assert stream.getvalue().splitlines() == ['CRITICAL: UNKNOWN LOGGING LEVEL SPECIFIED FOR THE NEXT ENTRY: LOUD',
                                              'CRITICAL: hello']


def test_invalid_level_configuration():
    with pytest.raises(KeyError):
        Logger('test-bad', console_level='LOUD')


def test_repeated_construction_does_not_stack_handlers():
    first, second = io.StringIO(), io.StringIO()
    Logger('test-repeat', console_stream=first)
    logger = Logger('test-repeat', console_stream=second, console_format='{message}')
    logger.log('INFO', 'once')
    logger.close()
    assert first.getvalue() == ''
    assert second.getvalue() == 'once\n'


def test_multiprocess_context():
    stream = io.StringIO()
    logger = Logger('test-mp', console_stream=stream, console_format='{message}')
    with pytest.raises(RuntimeError):
        with logger:
            pass
    with Manager() as man:
        with logger.init_mp_logging_context(man.Queue()) as mp_logger:
            mp_logger.log('INFO', 'from', 'worker')
            mp_logger.log_fields('INFO', 'trained', t=0.5)
    logger.close()
    assert stream.getvalue().splitlines() == ['from worker', 'trained t=0.5']


def test_null_logger():
    NullLogger.log('INFO', 'ignored')
    NullLogger().log_fields('INFO', 'ignored', x=1)
    assert not NullLogger().is_enabled_for('CRITICAL')
