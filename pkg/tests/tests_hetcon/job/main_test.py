import threading
import time

from hetcon.job import CallableJob, Job
from hetcon.job.scheduler import Scheduler, parallel_map

import pytest


class NopJob(Job):
    def run(self):
        pass

    @property
    def priority(self):
        try:
            result = -int(self.uid)
        except Exception:
            result = 0
        return result


class SleepJob(Job):
    def run(self):
        time.sleep(0.2)


class TestScheduler:
    def test_minimal_run(self):
        """Test with only two independent jobs."""
        s = Scheduler(Scheduler.simple_provider(SleepJob), tokens=2)
        s.run([("1", None), ("2", None)])
        assert s.max_active_jobs == 2
        assert s.is_finished

    def test_ordering(self):
        """Test that jobs are ordered correctly."""
        results = []

        def collect(job):
            results.append(job.uid)

        s = Scheduler(Scheduler.simple_provider(NopJob), tokens=1, collect=collect)
        s.run([("3", None), ("0", None), ("1", None)])
        assert tuple(results) == ("0", "1", "3")

    def test_skip(self):
        results = []

        def provider(uid, data, notify_end):
            job = NopJob(uid, data, notify_end)
            job.should_skip = uid == "skipped"
            return job

        def collect(job):
            results.append((job.uid, job.timing_info.start_time is None))

        s = Scheduler(provider, collect=collect)
        s.run([("skipped", None), ("run", None)])
        assert sorted(results) == [("run", False), ("skipped", True)]

    def test_requeue(self):
        runs = []

        def collect(job):
            runs.append(job.uid)
            return len(runs) < 3

        s = Scheduler(Scheduler.simple_provider(NopJob), collect=collect)
        s.run([("again", None)])
        assert runs == ["again", "again", "again"]

    def test_timeout(self):
        """Interrupting a job does not stop the scheduler."""
        s = Scheduler(
            Scheduler.simple_provider(SleepJob), tokens=2, job_timeout=0
        )
        s.run([("1", None), ("2", None)])
        assert s.is_finished


def test_callable_job():
    done = threading.Event()
    job = CallableJob("square", lambda: 3 * 3, lambda uid: done.set())
    job.start(slot=0)
    assert done.wait(5)
    assert job.result == 9
    assert job.error is None
    assert job.timing_info.duration >= 0


def test_callable_job_error():
    def fail():
        raise ValueError("bad item")

    done = threading.Event()
    job = CallableJob("fail", fail, lambda uid: done.set())
    job.start(slot=0)
    assert done.wait(5)
    assert isinstance(job.error, ValueError)


def test_interrupted_job_does_not_run():
    job = CallableJob("late", lambda: 1, lambda uid: None)
    assert job.interrupt()
    assert not job.interrupt()
    job.start(slot=0)
    job.handle.join()
    assert job.result is None


@pytest.mark.parametrize("jobs", [1, 4])
def test_parallel_map_order(jobs):
    def slow_square(x):
        time.sleep(0.01 * (5 - x))
        return x * x

    assert parallel_map(slow_square, list(range(5)), jobs=jobs) == [0, 1, 4, 9, 16]


def test_parallel_map_error():
    def check(x):
        if x % 2:
            raise ValueError(f"odd {x}")
        return x

    with pytest.raises(ValueError, match="odd 1"):
        parallel_map(check, [0, 1, 2, 3], jobs=3)
