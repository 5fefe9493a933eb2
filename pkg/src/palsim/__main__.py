from palsim.cli import main

main()
