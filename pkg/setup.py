from setuptools import setup, find_packages

setup(
    name="swlab",
    author="Johannes Kazantzidis",
    author_email="johannes.kazantzidis@ess.eu",
    use_scm_version=True,
    setup_requires=["setuptools_scm"],
    description="A numerical laboratory for perturbed Seiberg-Witten curvature estimates on 4-tori",
    license="MIT",
    entry_points={"console_scripts": ["swlab=swlab.cli:run"]},
    packages=find_packages(),
    python_requires=">=3.8",
    install_requires=[
        "numpy",
        "scipy",
        "sympy",
        "h5py",
        "PyYAML",
        "gitpython",
        "pytest-metadata",
        "pytest",
        "pytest-parallel",
        "pytest-html",
        "pdoc3",
    ],
    zip_safe=False,
)
