import pytest

from src.analysis.search import ProblemResult
from src.db.database import create_session_factory
from src.db.ledger import RunLedger

from tests.conftest import important


@pytest.fixture
def ledger():
    return RunLedger(create_session_factory(":memory:"))


def result(problem_id, *sets):
    return ProblemResult(problem_id, important(*sets), stats={"executions_used": 4})


class TestRunLedger:
    def test_completed_run(self, ledger):
        with ledger.track("analyze", {"analysis": {"budget": 100}}, seed=2**64 - 1) as run_id:
            ledger.record(run_id, result("p2", ["A"]))
            ledger.record(run_id, result("p1", ["B", "C"]))

        run = ledger.get_run(run_id)
        assert run["status"] == "completed"
        assert run["seed"] == str(2**64 - 1)
        assert run["problems_processed"] == 2
        assert run["completed_at"] is not None
        assert [r["problem_id"] for r in run["results"]] == ["p1", "p2"]
        assert run["results"][0]["important_sets"] == [["B", "C"]]

    def test_failed_run(self, ledger):
        with pytest.raises(RuntimeError):
            with ledger.track("oracle", {}, seed=0) as run_id:
                raise RuntimeError("adapter went away")
        run = ledger.get_run(run_id)
        assert run["status"] == "failed"
        assert run["error_message"] == "adapter went away"

    def test_interrupt_stale(self, ledger):
        stale = ledger.start("analyze", {}, seed=1)
        done = ledger.start("analyze", {}, seed=1)
        ledger.finish(done)
        assert ledger.interrupt_stale() == 1
        assert ledger.get_run(stale)["status"] == "interrupted"
        assert ledger.interrupt_stale() == 0

    def test_list_runs_newest_first(self, ledger):
        ids = [ledger.start("analyze", {}, seed=i) for i in range(3)]
        listed = ledger.list_runs(limit=2)
        assert [r["id"] for r in listed] == [ids[2], ids[1]]

    def test_unknown_run(self, ledger):
        assert ledger.get_run(99) is None
