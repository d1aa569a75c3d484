import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Union

from sqlalchemy import create_engine
from sqlalchemy.orm import Session, scoped_session, sessionmaker
from sqlalchemy.pool import StaticPool

from wildtorus.registry.models import Base

logger = logging.getLogger(__name__)

IN_MEMORY_URL = 'sqlite:///:memory:'


class RegistryDatabase:
    """Engine and session factory of one SQLite registry file."""

    def __init__(self, url: str = IN_MEMORY_URL):
        options = {'connect_args': {'check_same_thread': False}}
        if url == IN_MEMORY_URL:
            # every session must see the same in-memory database
            options['poolclass'] = StaticPool
        self.url = url
        self.engine = create_engine(url, **options)
        self.scoped_session = scoped_session(sessionmaker(bind=self.engine, expire_on_commit=False))

    @classmethod
    def at(cls, path: Union[str, Path]) -> 'RegistryDatabase':
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        database = cls(f'sqlite:///{path}')
        database.create_tables()
        logger.debug('registry opened at %s', path)
        return database

    def create_tables(self) -> None:
        Base.metadata.create_all(self.engine)

    def drop_tables(self) -> None:
        Base.metadata.drop_all(self.engine)

    @contextmanager
    def session(self) -> Iterator[Session]:
        session = self.scoped_session()
        try:
            yield session
            session.commit()
        except Exception:
            session.rollback()
            raise
        finally:
            session.close()
            self.scoped_session.remove()

    def dispose(self) -> None:
        self.scoped_session.remove()
        self.engine.dispose()
