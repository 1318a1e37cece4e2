"""
Model adapter module for the ASR evaluation harness.

A model adapter is any executable that, given 16 kHz audio, returns a
string. The harness starts an adapter process per run and talks to it over
standard streams, one request or reply per line:

    harness -> adapter:  <sample_id>\\t<audio_path>\\n   (one per utterance)
    adapter -> harness:  <sample_id>\\t<transcript>\\n   (any order)

Tabs, newlines and backslashes inside a transcript are escaped as \\t, \\n
and \\\\. The harness closes the adapter's stdin after the last request and
never decodes audio itself.

Timeouts are per utterance. An adapter session may take timeout_secs for
every utterance it still owes, counted from its last reply, so adapters that
answer in batches are not penalised. When that budget runs out the oldest
unanswered request is the stalled one: it is scored as an empty hypothesis
flagged adapter_timeout, the adapter is killed and a fresh process is
started for the utterances still outstanding. A session that answers
nothing after a restart means the adapter is dead, and every remaining
utterance times out.
"""

import logging
import os
import queue
import re
import shlex
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .corpus_io import Utterance
from .exceptions import AdapterError, AdapterProtocolError, ManifestError


logger = logging.getLogger(__name__)


_ESCAPES = {'t': '\t', 'n': '\n', '\\': '\\'}
_ESCAPE_PATTERN = re.compile(r'\\([tn\\])')

# Seconds to wait for a killed or finished adapter to be reaped
_REAP_TIMEOUT = 10.0

# Consecutive sessions without a single reply before the adapter is given up on
_MAX_IDLE_SESSIONS = 2

_EOF = None


@dataclass
class AdapterRun:
    """
    Outcome of one adapter run.

    Attributes:
        hypotheses: sample_id -> transcript for every answered utterance
        timed_out: IDs that exhausted their time budget, in request order
        no_reply: IDs pending when the adapter exited on its own
        restarts: Adapter processes started after a timeout
    """
    hypotheses: Dict[str, str] = field(default_factory=dict)
    timed_out: List[str] = field(default_factory=list)
    no_reply: List[str] = field(default_factory=list)
    restarts: int = 0


def unescape_transcript(text: str) -> str:
    return _ESCAPE_PATTERN.sub(lambda m: _ESCAPES[m.group(1)], text)


def escape_transcript(text: str) -> str:
    """Inverse of unescape_transcript, for adapter authors and tests."""
    return text.replace('\\', '\\\\').replace('\t', '\\t').replace('\n', '\\n')


class ModelAdapter:
    """
    Runs an adapter executable over a list of utterances.

    This class handles:
    - Spawning the adapter and streaming requests from a writer thread
    - Collecting replies from a reader thread through a queue
    - Enforcing per-utterance timeouts, restarting past a stalled request
    - Protocol validation (unknown, duplicate or malformed replies)
    """

    def __init__(self, command: Union[str, Sequence[str]], timeout_secs: float = 300.0):
        """
        Initialize Model Adapter.

        Args:
            command: Executable and arguments; a string is split shell-style
            timeout_secs: Time allowed per utterance
        """
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.argv:
            raise AdapterError("Adapter command is empty")
        self.timeout_secs = timeout_secs

    def run(self, utterances: Sequence[Utterance]) -> AdapterRun:
        """
        Transcribe every utterance, restarting the adapter after a stall.

        Args:
            utterances: Utterances with audio paths

        Returns:
            AdapterRun: Hypotheses plus timed-out and unanswered IDs

        Raises:
            ManifestError: An utterance has no usable audio path
            AdapterError: Adapter cannot start or exits with nonzero status
            AdapterProtocolError: Malformed, unknown or duplicate reply
        """
        requests = self._build_requests(utterances)
        result = AdapterRun()
        remaining = list(requests)
        idle_sessions = 0

        while remaining:
            answered_before = len(result.hypotheses)
            stalled = self._session(remaining, result)
            if not stalled:
                break

            if len(result.hypotheses) > answered_before:
                idle_sessions = 0
            else:
                idle_sessions += 1

            if idle_sessions >= _MAX_IDLE_SESSIONS:
                logger.warning(
                    f"Adapter answered nothing in {idle_sessions} sessions; "
                    f"{len(stalled)} utterance(s) timed out",
                    extra={'timed_out': len(stalled)}
                )
                result.timed_out.extend(stalled)
                break

            logger.warning(
                f"Utterance '{stalled[0]}' exceeded {self.timeout_secs}s; "
                f"{len(stalled) - 1} utterance(s) still outstanding",
                extra={'sample_id': stalled[0], 'outstanding': len(stalled) - 1}
            )
            result.timed_out.append(stalled[0])
            outstanding = set(stalled[1:])
            remaining = [(sid, line) for sid, line in remaining if sid in outstanding]
            if remaining:
                result.restarts += 1

        return result

    def _session(self, requests: List[Tuple[str, str]], result: AdapterRun) -> List[str]:
        """
        Run one adapter process over requests.

        Returns:
            List[str]: IDs still unanswered, in request order, when the time
            budget ran out; empty when the session ended normally
        """
        order = [sample_id for sample_id, _ in requests]
        pending = set(order)

        with tempfile.TemporaryFile(mode='w+', encoding='utf-8', errors='replace') as stderr_file:
            try:
                process = subprocess.Popen(
                    self.argv,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    stderr=stderr_file,
                    text=True,
                    encoding='utf-8',
                    bufsize=1,
                )
            except OSError as e:
                raise AdapterError(f"Cannot start adapter {self.argv[0]}: {e}") from e

            logger.info(
                f"Started adapter {self.argv[0]} for {len(requests)} utterances",
                extra={'adapter_pid': process.pid, 'utterance_count': len(requests)}
            )

            replies: "queue.Queue[object]" = queue.Queue()
            writer = threading.Thread(
                target=self._write_requests, args=(process, [line for _, line in requests]), daemon=True
            )
            reader = threading.Thread(
                target=self._read_replies, args=(process, replies), daemon=True
            )
            writer.start()
            reader.start()

            killed = False
            deadline = time.monotonic() + self.timeout_secs * len(pending)
            try:
                while pending:
                    try:
                        item = replies.get(timeout=max(deadline - time.monotonic(), 0.0))
                    except queue.Empty:
                        self._kill(process)
                        killed = True
                        break

                    if item is _EOF:
                        result.no_reply.extend(sid for sid in order if sid in pending)
                        break
                    if isinstance(item, Exception):
                        raise AdapterProtocolError(f"Unreadable adapter output: {item}")

                    sample_id, transcript = self._parse_reply(str(item))
                    if sample_id not in pending:
                        if sample_id in result.hypotheses:
                            raise AdapterProtocolError(f"Duplicate reply for sample_id '{sample_id}'")
                        raise AdapterProtocolError(f"Reply for unknown sample_id '{sample_id}'")
                    pending.discard(sample_id)
                    result.hypotheses[sample_id] = transcript
                    deadline = time.monotonic() + self.timeout_secs * len(pending)
            except AdapterProtocolError:
                self._kill(process)
                self._reap(process)
                raise

            returncode = self._reap(process)
            writer.join(_REAP_TIMEOUT)
            reader.join(_REAP_TIMEOUT)

            stderr_file.seek(0)
            stderr_text = stderr_file.read()

        if stderr_text:
            logger.debug(f"Adapter stderr:\n{stderr_text.rstrip()}")

        if not killed and returncode != 0:
            raise AdapterError(
                f"Adapter exited with status {returncode}",
                returncode=returncode,
                stderr=stderr_text,
            )

        if result.no_reply:
            logger.warning(
                f"Adapter exited without answering {len(result.no_reply)} utterance(s)",
                extra={'no_reply': len(result.no_reply)}
            )

        return [sid for sid in order if sid in pending] if killed else []

    @staticmethod
    def _build_requests(utterances: Sequence[Utterance]) -> List[Tuple[str, str]]:
        requests = []
        for utterance in utterances:
            sample_id, audio = utterance.sample_id, utterance.audio_path
            if any(c in sample_id for c in '\t\n\r'):
                raise ManifestError(f"sample_id {sample_id!r} cannot be sent to an adapter")
            if audio is None:
                raise ManifestError(f"No audio path for '{sample_id}'; adapter runs need 'audio'")
            if any(c in audio for c in '\t\n\r'):
                raise ManifestError(f"Audio path for '{sample_id}' contains a tab or newline")
            if not os.path.exists(audio):
                raise ManifestError(f"Audio file for '{sample_id}' not found: {audio}")
            requests.append((sample_id, f"{sample_id}\t{audio}\n"))
        return requests

    @staticmethod
    def _write_requests(process: subprocess.Popen, requests: List[str]) -> None:
        stdin = process.stdin
        try:
            for line in requests:
                stdin.write(line)
            stdin.flush()
        except (BrokenPipeError, OSError, ValueError):
            # Adapter stopped reading; the reply loop reports the outcome
            pass
        finally:
            try:
                stdin.close()
            except (BrokenPipeError, OSError):
                pass

    @staticmethod
    def _read_replies(process: subprocess.Popen, replies: "queue.Queue[object]") -> None:
        try:
            for line in process.stdout:
                replies.put(line)
        except (UnicodeDecodeError, ValueError, OSError) as e:
            replies.put(e)
        finally:
            replies.put(_EOF)

    @staticmethod
    def _parse_reply(line: str) -> Tuple[str, str]:
        line = line.rstrip('\n')
        if line.endswith('\r'):
            line = line[:-1]
        sample_id, sep, transcript = line.partition('\t')
        if not sep:
            raise AdapterProtocolError(f"Reply without a tab separator: {line[:80]!r}")
        return sample_id, unescape_transcript(transcript)

    @staticmethod
    def _kill(process: subprocess.Popen) -> None:
        if process.poll() is None:
            process.kill()

    @staticmethod
    def _reap(process: subprocess.Popen) -> Optional[int]:
        try:
            return process.wait(timeout=_REAP_TIMEOUT)
        except subprocess.TimeoutExpired:
            process.kill()
            return process.wait()


def run_adapter(
    adapter_command: Union[str, Sequence[str]],
    utterances: Sequence[Utterance],
    timeout_secs: float = 300.0
) -> AdapterRun:
    """Run one adapter process over utterances; see ModelAdapter.run."""
    return ModelAdapter(adapter_command, timeout_secs).run(utterances)
