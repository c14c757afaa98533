#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

import sys
import logging
from threading import Thread
from argparse import Namespace
from functools import partial

LOG_LEVELS = {'DEBUG': logging.DEBUG, 'INFO': logging.INFO, 'WARNING': logging.WARNING, 'ERROR': logging.ERROR,
              'CRITICAL': logging.CRITICAL}


def format_fields(event, **fields):
    """Render an event with key=value pairs in sorted key order (floats with 6 significant digits)"""
    parts = [event]
    for key in sorted(fields):
        val = fields[key]
        if isinstance(val, float):
            val = '{0:.6g}'.format(val)
        parts.append('{0}={1}'.format(key, val))
    return ' '.join(parts)


class Logger:
    """
        print()-like logging for the experiment pipeline on top of Python's logging module.
        Each component gets its own named logger; console and (optional) file handlers have separate levels.
    """
    def __init__(self, name='shallowdiffusion', log_filename=None, logfile_mode='a', logfile_encoding='UTF-8',
                 logfile_level='INFO', console_stream=sys.stderr, console_level='INFO',
                 console_format='{asctime} {name} {levelname}: {message}',
                 file_format='{asctime} {name} {levelname}: {message}'):
        for kind, level in (('Console', console_level), ('Logfile', logfile_level)):
            if level not in LOG_LEVELS:
                raise KeyError('{0} loglevel is not valid ({1}): {2}'.format(kind, ', '.join(LOG_LEVELS.keys()),
                                                                             level))
        self.name = name
        self._logger = logging.getLogger(name)
        self._logger.propagate = False
        # The same name may be requested twice in one process (e.g. sweep cells), do not stack handlers
        self._drop_handlers()

        levels = [self._add_handler(logging.StreamHandler(stream=console_stream), console_level, console_format)]
        if log_filename is not None:
            f_handler = logging.FileHandler(log_filename, mode=logfile_mode, encoding=logfile_encoding)
            levels.append(self._add_handler(f_handler, logfile_level, file_format))
        self._logger.setLevel(min(levels))

        # Set while a multiprocess logging context is open
        self._queue = None
        self._drain_thread = None

    def _add_handler(self, handler, level, fmt):
        handler.setLevel(LOG_LEVELS[level])
        handler.setFormatter(logging.Formatter(fmt, style='{'))
        self._logger.addHandler(handler)
        return LOG_LEVELS[level]

    def _emit(self, level, text):
        if level not in LOG_LEVELS:
            self._logger.critical('UNKNOWN LOGGING LEVEL SPECIFIED FOR THE NEXT ENTRY: {0}'.format(level))
            level = 'CRITICAL'
        self._logger.log(LOG_LEVELS[level], text)

    def log(self, level, *message, sep=' '):
        """
            A print()-like logging function
                :param level: (str) Levels from the standard set: 'DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'
                :param message: One or more elems as for print()
                :param sep: Separator element as for print()
                :return: None
        """
        self._emit(level, sep.join(str(msg) for msg in message))

    def log_fields(self, level, event, **fields):
        """Structured variant: log_fields('INFO', 'epoch', loss=0.1) -> 'epoch loss=0.1'"""
        self._emit(level, format_fields(event, **fields))

    def is_enabled_for(self, level):
        return self._logger.isEnabledFor(LOG_LEVELS.get(level, logging.CRITICAL))

    # Worker side: messages are rendered in the worker, only (level, text) pairs cross the process boundary
    @staticmethod
    def _log_to_queue(queue, level, *message, sep=' '):
        queue.put((level, sep.join(str(msg) for msg in message)))

    @staticmethod
    def _log_fields_to_queue(queue, level, event, **fields):
        queue.put((level, format_fields(event, **fields)))

    def _drain(self):
        for item in iter(self._queue.get, None):
            self._emit(*item)

    def init_mp_logging_context(self, queue):
        """
            Start a thread which drains a (Manager) Queue into this logger.
            Inside the context the returned object has log() and log_fields() which are picklable,
             so it can be handed to Pool workers:

                with Manager() as man:
                    with logger.init_mp_logging_context(man.Queue()) as mp_logger, Pool(k) as p:
                        for rec in p.imap(run_cell, zip(cells, repeat(mp_logger))):
                            ...
        """
        self._queue = queue
        self._drain_thread = Thread(target=self._drain)
        self._drain_thread.start()
        return self

    def __enter__(self):
        if self._queue is None:
            raise RuntimeError('Must call init_mp_logging_context() with an initialised Queue as param'
                               ' before entering into context!')
        return Namespace(log=partial(self._log_to_queue, self._queue),
                         log_fields=partial(self._log_fields_to_queue, self._queue))

    def __exit__(self, exc_type, exc_value, exc_traceback):
        self._queue.put(None)
        self._drain_thread.join()
        self._queue = None
        self._drain_thread = None

    def _drop_handlers(self):
        for handler in list(self._logger.handlers):
            self._logger.removeHandler(handler)
            handler.flush()
            if isinstance(handler, logging.FileHandler):
                handler.close()

    def close(self):
        self._drop_handlers()


class NullLogger:
    """Same interface, drops everything (library calls without a configured logger)"""
    name = 'null'

    @staticmethod
    def log(*_, **__):
        pass

    @staticmethod
    def log_fields(*_, **__):
        pass

    @staticmethod
    def is_enabled_for(_):
        return False
