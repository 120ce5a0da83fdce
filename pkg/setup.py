from setuptools import setup, find_namespace_packages

setup(
    name="fbsde-jumps",
    version="0.1.0",
    description="Second-order quadrature solver and CLI for decoupled FBSDEs with jumps",
    author="FBSDE Jumps developers",
    packages=find_namespace_packages(where="src/", include=["fbsde.jumps"]),
    package_dir={"": "src"},
    namespace_packages=["fbsde"],
    install_requires=[
        "click",
        "numpy",
        "pandas",
        "pydantic",
        "python-dotenv",
        "scipy",
    ],
    extras_require={
        "test": ["pytest"],
    },
    entry_points={
        "console_scripts": [
            "fbsde-cli = fbsde.jumps.cli:main",
        ],
    },
    include_package_data=True,
)
