import json
import logging
import uuid
from datetime import datetime
from typing import Dict, List, Optional

import apsw

logger = logging.getLogger(__name__)


class RunHistory:
    def __init__(self, db_path: str = "scenegraph_runs.db"):
        """Open (or create) the run ledger at db_path; ":memory:" for a throwaway one"""
        self.db_path = db_path
        self.connection = apsw.Connection(db_path)
        self.init_database()

    def init_database(self):
        """Create tables if they don't exist"""
        cursor = self.connection.cursor()

        cursor.execute('''
            CREATE TABLE IF NOT EXISTS runs (
                id TEXT PRIMARY KEY,
                command TEXT NOT NULL,
                relation TEXT,
                seed INTEGER,
                args TEXT NOT NULL,
                artifact_path TEXT,
                summary TEXT,
                created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
            )
        ''')

        cursor.execute('''
            CREATE TABLE IF NOT EXISTS epoch_metrics (
                run_id TEXT NOT NULL,
                epoch INTEGER NOT NULL,
                loss REAL NOT NULL,
                precision REAL,
                recall REAL,
                PRIMARY KEY (run_id, epoch),
                FOREIGN KEY (run_id) REFERENCES runs (id)
            )
        ''')

        cursor.execute('''
            CREATE TABLE IF NOT EXISTS reports (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_id TEXT NOT NULL,
                relation TEXT NOT NULL,
                true_positives REAL NOT NULL,
                false_positives REAL NOT NULL,
                false_negatives REAL NOT NULL,
                precision REAL,
                recall REAL,
                FOREIGN KEY (run_id) REFERENCES runs (id)
            )
        ''')

        cursor.execute('''
            CREATE INDEX IF NOT EXISTS idx_runs_created
            ON runs(created_at)
        ''')

    def start_run(self, command: str, args: Dict, relation: Optional[str] = None,
                  seed: Optional[int] = None) -> str:
        """Record a run and return its ID"""
        run_id = str(uuid.uuid4())
        cursor = self.connection.cursor()
        cursor.execute('''
            INSERT INTO runs (id, command, relation, seed, args, created_at)
            VALUES (?, ?, ?, ?, ?, ?)
        ''', (run_id, command, relation, seed, json.dumps(args, sort_keys=True, default=str),
              datetime.now().isoformat(timespec='seconds')))
        logger.debug("run %s started (%s)", run_id, command)
        return run_id

    def finish_run(self, run_id: str, artifact_path: Optional[str] = None, summary: Optional[Dict] = None):
        cursor = self.connection.cursor()
        cursor.execute('''
            UPDATE runs
            SET artifact_path = ?, summary = ?
            WHERE id = ?
        ''', (artifact_path, json.dumps(summary, sort_keys=True) if summary is not None else None, run_id))

    def add_epoch(self, run_id: str, epoch: int, loss: float, precision: Optional[float], recall: Optional[float]):
        cursor = self.connection.cursor()
        cursor.execute('''
            INSERT OR REPLACE INTO epoch_metrics (run_id, epoch, loss, precision, recall)
            VALUES (?, ?, ?, ?, ?)
        ''', (run_id, epoch, loss, precision, recall))

    def add_report(self, run_id: str, report):
        """Store a DetectionReport's aggregate counts"""
        cursor = self.connection.cursor()
        cursor.execute('''
            INSERT INTO reports (run_id, relation, true_positives, false_positives,
                                 false_negatives, precision, recall)
            VALUES (?, ?, ?, ?, ?, ?, ?)
        ''', (run_id, report.relation, report.true_positives, report.false_positives,
              report.false_negatives, report.precision, report.recall))

    def get_epochs(self, run_id: str) -> List[Dict]:
        cursor = self.connection.cursor()
        return [
            {'epoch': row[0], 'loss': row[1], 'precision': row[2], 'recall': row[3]}
            for row in cursor.execute('''
                SELECT epoch, loss, precision, recall FROM epoch_metrics
                WHERE run_id = ?
                ORDER BY epoch ASC
            ''', (run_id,))
        ]

    def get_reports(self, run_id: str) -> List[Dict]:
        cursor = self.connection.cursor()
        return [
            {'relation': row[0], 'tp': row[1], 'fp': row[2], 'fn': row[3],
             'precision': row[4], 'recall': row[5]}
            for row in cursor.execute('''
                SELECT relation, true_positives, false_positives, false_negatives, precision, recall
                FROM reports WHERE run_id = ?
                ORDER BY id ASC
            ''', (run_id,))
        ]

    def get_runs(self, limit: int = 20, command: Optional[str] = None) -> List[Dict]:
        """Most recent runs first"""
        cursor = self.connection.cursor()
        query = 'SELECT id, command, relation, seed, args, artifact_path, summary, created_at FROM runs'
        params = []
        if command:
            query += ' WHERE command = ?'
            params.append(command)
        query += ' ORDER BY created_at DESC, rowid DESC LIMIT ?'
        params.append(limit)

        runs = []
        for row in cursor.execute(query, params):
            runs.append({
                'id': row[0],
                'command': row[1],
                'relation': row[2],
                'seed': row[3],
                'args': json.loads(row[4]),
                'artifact_path': row[5],
                'summary': json.loads(row[6]) if row[6] else None,
                'created_at': row[7],
            })
        return runs

    def get_stats(self) -> Dict:
        """Run counts per command and the best recorded held-out precision"""
        cursor = self.connection.cursor()
        per_command = {row[0]: row[1] for row in cursor.execute(
            'SELECT command, COUNT(*) FROM runs GROUP BY command ORDER BY command'
        )}
        total_epochs = list(cursor.execute('SELECT COUNT(*) FROM epoch_metrics'))[0][0]
        best = list(cursor.execute('''
            SELECT r.relation, MAX(e.precision) FROM epoch_metrics e
            JOIN runs r ON r.id = e.run_id
            WHERE e.precision IS NOT NULL
            GROUP BY r.relation ORDER BY r.relation
        '''))
        return {
            'total_runs': sum(per_command.values()),
            'runs_per_command': per_command,
            'total_epochs': total_epochs,
            'best_precision': {row[0]: row[1] for row in best},
        }

    def close(self):
        """Close the database connection"""
        self.connection.close()
