from wildtorus.registry import RegistryDatabase, SqlRunRepository

TEST_REGISTRY = RegistryDatabase()


def make_repository() -> SqlRunRepository:
    return SqlRunRepository(TEST_REGISTRY)
