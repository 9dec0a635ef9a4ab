# Housing Recession Impact - Run Monitoring
# =========================================

import threading
import time
from collections import deque
from contextlib import contextmanager

import psutil
from prometheus_client import CollectorRegistry, Counter, Gauge, Histogram, write_to_textfile


class RunMonitor:
    """Per-run counters for region processing, kept in a private registry"""

    def __init__(self, command):
        self.command = command
        self.registry = CollectorRegistry()
        self._lock = threading.Lock()
        self._started = time.perf_counter()

        self.regions_total = Counter(
            'housing_regions_total',
            'Regions processed, by outcome',
            ['command', 'status'],
            registry=self.registry,
        )

        self.region_seconds = Histogram(
            'housing_region_seconds',
            'Time spent on one region in seconds',
            ['command'],
            registry=self.registry,
        )

        self.memory_usage = Gauge(
            'housing_process_memory_bytes',
            'Resident set size of the process in bytes',
            registry=self.registry,
        )

        # Recent durations for the summary report
        self.durations = deque(maxlen=1000)
        self.counts = {'ok': 0, 'skipped': 0}

    @contextmanager
    def track_region(self):
        """Time one region; the caller reports the outcome via record_region"""
        start = time.perf_counter()
        try:
            yield
        finally:
            duration = time.perf_counter() - start
            self.region_seconds.labels(command=self.command).observe(duration)
            with self._lock:
                self.durations.append(duration)

    def record_region(self, status):
        """Count a region as 'ok' or 'skipped'"""
        self.regions_total.labels(command=self.command, status=status).inc()
        with self._lock:
            self.counts[status] = self.counts.get(status, 0) + 1

    def sample_memory(self):
        rss = psutil.Process().memory_info().rss
        self.memory_usage.set(rss)
        return rss

    def report(self):
        """Summary for the end-of-run log line (never written to result files)"""
        rss = self.sample_memory()
        with self._lock:
            durations = list(self.durations)
            counts = dict(self.counts)
        avg = sum(durations) / len(durations) if durations else 0

        return {
            'command': self.command,
            'regions_ok': counts.get('ok', 0),
            'regions_skipped': counts.get('skipped', 0),
            'avg_region_ms': round(avg * 1000, 2),
            'elapsed_seconds': round(time.perf_counter() - self._started, 3),
            'memory_mb': round(rss / 1024 / 1024, 2),
        }

    def write_textfile(self, path):
        """Export the registry in the Prometheus text format"""
        self.sample_memory()
        write_to_textfile(path, self.registry)
