import unittest
from flask import current_app
from app import create_app


class BasicsTestCase(unittest.TestCase):
    def setUp(self):
        self.app = create_app('testing')
        self.app_context = self.app.app_context()
        self.app_context.push()

    def tearDown(self):
        self.app_context.pop()

    def test_app_exists(self):
        self.assertFalse(current_app is None)

    def test_app_is_testing(self):
        self.assertTrue(current_app.config['TESTING'])
        self.assertIsNone(current_app.config['SLABRES_CACHE_DIR'])

    def test_commands_registered(self):
        for name in ('eigen', 'gram', 'det', 'solve', 'asym', 'field', 'sweep', 'verify'):
            with self.subTest(command=name):
                self.assertIn(name, self.app.cli.commands)
