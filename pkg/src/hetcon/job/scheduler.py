from __future__ import annotations

import heapq
import time
from datetime import datetime
from queue import Empty, Queue
from typing import TYPE_CHECKING, TypeVar

import hetcon.log
from hetcon.job import CallableJob, Job


if TYPE_CHECKING:
    from typing import Any
    from collections.abc import Callable, Sequence

    JobProviderCallback = Callable[[str, Any, Callable[[str], None]], Job]
    CollectCallback = Callable[[Job], bool]

T = TypeVar("T")
R = TypeVar("R")

logger = hetcon.log.getLogger("job.scheduler")

# The default maximum duration for a job, in seconds (24 hours).
DEFAULT_JOB_MAX_DURATION = 3600 * 24


class Scheduler:
    """Handle parallel execution of independent jobs."""

    def __init__(
        self,
        job_provider: JobProviderCallback,
        collect: CollectCallback | None = None,
        tokens: int = 1,
        job_timeout: int = DEFAULT_JOB_MAX_DURATION,
    ):
        """Initialize Scheduler.

        :param job_provider: function that returns instances of Job.
            The function takes as arguments: the job uid, the data
            associated with it and a notification function called when
            the job end.
        :param collect: function that collect results from the
            jobs. If the function returns True then the job is requeued
        :param tokens: maximum number of jobs running at the same time
        :param job_timeout: maximum execution time for a job. The default
            is 24h. A job reaching it is interrupted.
        """
        self.job_provider = job_provider
        self.job_timeout = job_timeout
        if collect is None:
            self.collect: Callable[[Job], bool] = lambda x: False
        else:
            self.collect = collect

        self.active_jobs: list[Job] = []
        self.queue: list[tuple[int, int, Job]] = []
        self.message_queue: Queue[Any] = Queue()
        self.start_time: datetime | None = None
        self.stop_time: datetime | None = None
        self.max_active_jobs = 0
        self.global_queue_index = 1
        self.n_tokens = max(1, tokens)
        self.tokens = self.n_tokens

        # Create a slot reserve. The goal is to give a given job a number
        # which is unique among the active jobs.
        self.slots = list(range(self.n_tokens))

    def safe_collect(self, job: Job) -> bool:
        """Protect call to collect."""
        with Job.lock:
            return self.collect(job)

    @classmethod
    def simple_provider(cls, job_class: type[Job]) -> JobProviderCallback:
        """Return a simple provider based on a given Job class.

        :param job_class: a subclass of Job
        """

        def provider(uid: str, data: Any, notify_end: Callable[[str], None]) -> Job:
            return job_class(uid, data, notify_end)

        return provider

    def init_state(self) -> None:
        """Reinitialize the scheduler state (internal function)."""
        self.active_jobs = []
        self.queue = []
        self.message_queue = Queue()
        self.start_time = datetime.now()
        self.stop_time = None
        self.max_active_jobs = 0
        self.tokens = self.n_tokens
        self.slots = list(range(self.n_tokens))

    @property
    def is_finished(self) -> bool:
        """Check if all jobs have been executed (internal).

        :return: True if complete
        """
        return not self.queue and not self.active_jobs

    def log_state(self) -> None:
        """Log the current state of the scheduler (internal)."""
        logger.debug(
            "in queue: %s, running: %s", len(self.queue), len(self.active_jobs)
        )

    def run(self, items: Sequence[tuple[str, Any]]) -> None:
        """Launch the scheduler.

        :param items: (uid, data) pairs, one job is created per pair
        """
        self.init_state()
        for uid, data in items:
            job = self.job_provider(uid, data, self.message_queue.put)
            if job.should_skip:
                self.safe_collect(job)
                job.on_finish(self)
            else:
                self.push(job)

        try:
            while not self.is_finished:
                self.launch()
                self.log_state()
                self.max_active_jobs = max(self.max_active_jobs, len(self.active_jobs))
                self.wait()
        except KeyboardInterrupt:
            logger.info("Interrupting jobs...")
            for p in self.active_jobs:
                p.interrupt()
                self.safe_collect(p)
                p.on_finish(self)
            raise
        self.stop_time = datetime.now()

    def push(self, job: Job) -> None:
        """Push a job into the queue."""
        # We use a tuple here to ensure the stability of the queue
        # when two jobs have similar priorities.
        heapq.heappush(self.queue, (-job.priority, self.global_queue_index, job))
        self.global_queue_index += 1

    def launch(self) -> None:
        """Launch next jobs in the queue (internal)."""
        while self.queue and self.queue[0][2].tokens <= self.tokens:
            _, _, next_job = heapq.heappop(self.queue)
            next_job.on_start(self)
            next_job.start(slot=self.slots.pop())
            self.tokens -= next_job.tokens
            self.active_jobs.append(next_job)

    def wait(self) -> None:
        """Wait for the end of an active job."""
        if not self.active_jobs:
            return

        # Wait for message from one the active jobs
        while True:
            # The first job in active jobs is the oldest one
            # compute the get timeout based on its startup information
            first_job = self.active_jobs[0]
            current_timeout = self.job_timeout - first_job.timing_info.duration

            # Ensure waiting time is a positive number
            current_timeout = max(0.1, current_timeout)

            try:
                uid = self.message_queue.get(block=True, timeout=current_timeout)

            except Empty:
                # If after timeout we get an empty result, it means that
                # the oldest job has reached the timeout. Interrupt it
                # and wait for the queue to receive the end notification
                self.active_jobs[0].interrupt()
                time.sleep(0.1)

            else:
                job_index, job = next(
                    (
                        (index, job)
                        for index, job in enumerate(self.active_jobs)
                        if job.uid == uid
                    )
                )
                ti = job.timing_info
                logger.debug(
                    "job %s %s after %s",
                    uid,
                    "interrupted" if job.interrupted else "finished",
                    ti.duration,
                )
                self.slots.append(job.slot)

                # Liberate the resources taken by the job
                self.tokens += job.tokens
                collect_result = self.safe_collect(job)
                job.on_finish(self)

                if collect_result:
                    # Requeue when needed
                    self.push(job)

                del self.active_jobs[job_index]
                return


def parallel_map(
    fn: Callable[[T], R], items: Sequence[T], jobs: int = 1, label: str = "job"
) -> list[R]:
    """Apply fn to every item, running at most jobs calls at the same time.

    Results are returned in the order of items whatever the completion
    order. When a call fails, the exception of the first failing item (in
    items order) is raised once every job has completed.

    :param fn: function called with one item
    :param items: the work list
    :param jobs: maximum number of concurrent calls
    :param label: prefix of the job uids, used in logs
    """
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    finished: dict[str, CallableJob] = {}

    def collect(job: Job) -> bool:
        assert isinstance(job, CallableJob)
        finished[job.uid] = job
        return False

    uids = [f"{label}-{idx}" for idx in range(len(items))]
    scheduler = Scheduler(
        Scheduler.simple_provider(CallableJob), collect=collect, tokens=jobs
    )
    scheduler.run(
        [
            (uid, (lambda item=item: fn(item)))  # type: ignore[misc]
            for uid, item in zip(uids, items)
        ]
    )

    results = []
    for uid in uids:
        job = finished[uid]
        if job.error is not None:
            raise job.error
        results.append(job.result)
    return results
