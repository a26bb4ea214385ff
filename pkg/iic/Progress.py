#!/bin/python
"""
Progress reporting for training passes, search iterations and sweeps.

A task is counted in named units ("sequences", "iterations", "runs").
  Searches whose candidates stop at the token cap may need more
  iterations than estimated, so `set_current` clamps to the maximum.
"""
import logging

g_logger = logging.getLogger("iic.Progress")


class Progress(object):
    """
    An interface to things that track the progress of a long running task.

    @param max_: number of units in the task
    @param unit: plural name of a unit, for display
    """
    def __init__(self, max_, unit="steps"):
        super(Progress, self).__init__()
        self._max = max(0, int(max_))
        self._unit = unit
        self._current = 0

    @property
    def unit(self):
        return self._unit

    def set_current(self, current):
        """
        @type current: int, units done so far
        """
        self._current = min(current, self._max)

    def set_complete(self):
        self._current = self._max
        g_logger.debug("finished %d %s", self._max, self._unit)

    def current(self):
        return self._current

    def fraction(self):
        return self._current / float(self._max) if self._max else 1.0

    def __str__(self):
        return "%d/%d %s" % (self._current, self._max, self._unit)


class NullProgress(Progress):
    """
    Ignores updates; the default for library calls.
    """
    def set_current(self, current):
        pass


class ProgressBarProgress(Progress):
    """
    A terminal bar drawn with the `progressbar2` package, labelled with
      the unit and showing the count done.
    """
    def __init__(self, max_, unit="steps"):
        from progressbar import Bar
        from progressbar import ETA
        from progressbar import ProgressBar
        from progressbar import SimpleProgress
        super(ProgressBarProgress, self).__init__(max_, unit)

        widgets = ["%s: " % unit.capitalize(), SimpleProgress(), " ",
                   Bar(marker="=", left="[", right="]"), " ", ETA()]
        self._pbar = ProgressBar(widgets=widgets, max_value=self._max)
        self._started = False

    def set_current(self, current):
        if not self._started:
            self._pbar.start()
            self._started = True
        super(ProgressBarProgress, self).set_current(current)
        self._pbar.update(self._current)

    def set_complete(self):
        super(ProgressBarProgress, self).set_complete()
        self._pbar.finish()
