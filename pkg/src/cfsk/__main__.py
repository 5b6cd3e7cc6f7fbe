from cfsk.cli import main

main()
